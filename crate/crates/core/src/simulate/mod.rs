//! Ground-truth synthesis: directional image-source channels for every
//! microphone and the noisy recordings they produce.

mod export;
mod source;

pub use export::{mic_file_name, read_observations, write_observations, TruthSidecar};
pub use source::{make_source, CHIRP_BAND};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dsp::{convolve, fractional_delay_kernel, KERNEL_HALF_WIDTH};
use crate::error::{Error, Result};
use crate::num::wrap_two_pi;
use crate::scene::{mic_positions, omni, Point, RadiationPattern, Room, Scene, SourceKind, SPEED_OF_SOUND};
use crate::{ImpulseResponse, Signal};

/// Distances below this are clamped in the 1/d spreading law, meters.
pub const MIN_DISTANCE: f64 = 0.1;

/// Recorded signals, indexed `[device][mic]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub devices: Vec<Vec<Signal>>,
}

impl Observations {
    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.devices.first().and_then(|d| d.first()).map(|s| s.sample_rate()).unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.devices.first().and_then(|d| d.first()).map(|s| s.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every signal multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self { devices: self.devices.iter().map(|d| d.iter().map(|s| s.scaled(gain)).collect()).collect() }
    }

    /// Keeps only the listed devices, in the given order.
    pub fn select(&self, devices: &[usize]) -> Self {
        Self { devices: devices.iter().map(|&i| self.devices[i].clone()).collect() }
    }
}

/// What the simulator knows and the estimator must recover.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Source waveform including the silent pre-roll.
    pub source: Signal,
    /// `[device][mic]` channels.
    pub channels: Vec<Vec<ImpulseResponse>>,
    /// Direct-path amplitude `G(phi_i) / max(d_i, d_min)` towards each array centre.
    pub los_amplitudes: Vec<f64>,
    /// User direction in each device's frame, radians in `[0, 2pi)`.
    pub aoas: Vec<f64>,
    /// User-to-array-centre distances, meters.
    pub distances: Vec<f64>,
    pub facing_device: usize,
    /// First sample of the source after the pre-roll.
    pub onset: usize,
    /// Standard deviation of the added noise.
    pub noise_sigma: f64,
}

/// Point source with a directional gain.
#[derive(Debug, Clone, Copy)]
pub struct Emitter<'a> {
    pub position: Point,
    pub facing: f64,
    pub pattern: &'a RadiationPattern,
}

/// Image-source channel from `emitter` to `receiver` in a rectangular room.
///
/// Each path contributes `G(phi) * (1 - absorption)^bounces / max(path, d_min)`
/// at delay `path / c`, placed with the windowed-sinc interpolator. `phi` is
/// the departure angle at the real source relative to its facing direction.
pub fn image_source_channel(
    room: &Room,
    emitter: &Emitter<'_>,
    receiver: Point,
    reflection_order: u32,
    sample_rate: u32,
) -> ImpulseResponse {
    let fs = sample_rate as f64;
    let reflect = 1.0 - room.absorption;
    let order = reflection_order as i64;
    let facing_vec = Point::from_polar(1.0, emitter.facing);
    let mut paths: Vec<(f64, f64)> = Vec::new();
    for nx in -order..=order {
        for qx in 0..2i64 {
            let bx = (2 * nx - qx).abs();
            if bx > order {
                continue;
            }
            for ny in -order..=order {
                for qy in 0..2i64 {
                    let by = (2 * ny - qy).abs();
                    let bounces = bx + by;
                    if bounces > order {
                        continue;
                    }
                    let gain = reflect.powi(bounces as i32);
                    if gain == 0.0 {
                        continue;
                    }
                    let (sx, sy) = ((1 - 2 * qx) as f64, (1 - 2 * qy) as f64);
                    let image = Point::new(
                        sx * emitter.position.x + 2.0 * nx as f64 * room.width,
                        sy * emitter.position.y + 2.0 * ny as f64 * room.depth,
                    );
                    let image_facing = Point::new(sx * facing_vec.x, sy * facing_vec.y);
                    let ray = receiver - image;
                    // a mirror flips the handedness of the departure angle
                    let handed = if (qx + qy) % 2 == 0 { 1.0 } else { -1.0 };
                    let departure = handed * (ray.angle() - image_facing.angle());
                    let dist = ray.norm();
                    let amp = emitter.pattern.gain(departure) * gain / dist.max(MIN_DISTANCE);
                    paths.push((dist / SPEED_OF_SOUND * fs, amp));
                }
            }
        }
    }
    place_taps(&paths, sample_rate)
}

/// Sums fractional-delay taps `(delay_samples, amplitude)` into an impulse response.
pub(crate) fn place_taps(paths: &[(f64, f64)], sample_rate: u32) -> ImpulseResponse {
    let half = KERNEL_HALF_WIDTH as i64;
    let last = paths.iter().map(|p| p.0).fold(0.0, f64::max);
    let len = (last.floor() as i64 + half + 2).max(1) as usize;
    let mut taps = vec![0.0; len];
    for &(delay, amp) in paths {
        let whole = delay.floor();
        let kernel = fractional_delay_kernel(delay - whole);
        for (i, g) in kernel.iter().enumerate() {
            let k = whole as i64 + i as i64 - half;
            if k >= 0 && (k as usize) < len {
                taps[k as usize] += amp * g;
            }
        }
    }
    ImpulseResponse::from_trusted(taps, sample_rate)
}

/// Channel from the user to microphone `mic` of device `device`.
pub fn synth_channel(scene: &Scene, device: usize, mic: usize, reflection_order: u32) -> Result<ImpulseResponse> {
    if reflection_order > 3 {
        return Err(Error::InvalidInput(format!("reflection order {reflection_order} exceeds 3")));
    }
    let d =
        scene.devices.get(device).ok_or_else(|| Error::InvalidInput(format!("device index {device} out of range")))?;
    let mics = mic_positions(d);
    let receiver = *mics
        .get(mic)
        .ok_or_else(|| Error::InvalidInput(format!("mic index {mic} out of range for {} mics", mics.len())))?;
    let pattern = scene.user.pattern.pattern();
    let emitter = Emitter { position: scene.user.position, facing: scene.user.facing, pattern: &pattern };
    Ok(image_source_channel(&scene.room, &emitter, receiver, reflection_order, scene.sample_rate))
}

/// Per-microphone recordings, their channels and the noise sigma used.
type Rendered = (Vec<Vec<Signal>>, Vec<Vec<ImpulseResponse>>, f64);

/// Convolves `source` through per-mic channels and adds seeded white noise.
///
/// `receivers[i]` lists the microphone positions of device `i`. Noise for
/// `(i, j)` comes from its own RNG stream, so output does not depend on
/// scheduling.
fn render(
    room: &Room,
    emitter: &Emitter<'_>,
    receivers: &[Vec<Point>],
    source: &Signal,
    reflection_order: u32,
    noise_sigma_for: impl Fn(&[Vec<Signal>]) -> f64,
    seed: u64,
) -> Result<Rendered> {
    let fs = source.sample_rate();
    let pairs: Vec<(usize, usize)> =
        receivers.iter().enumerate().flat_map(|(i, m)| (0..m.len()).map(move |j| (i, j))).collect();
    let rendered: Vec<(ImpulseResponse, Signal)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let h = image_source_channel(room, emitter, receivers[i][j], reflection_order, fs);
            let x = convolve(source, &h).expect("rates match");
            (h, x)
        })
        .collect();
    let len = rendered.iter().map(|(_, x)| x.len()).max().unwrap_or(0);
    let mut channels: Vec<Vec<ImpulseResponse>> = receivers.iter().map(|m| Vec::with_capacity(m.len())).collect();
    let mut clean: Vec<Vec<Signal>> = receivers.iter().map(|m| Vec::with_capacity(m.len())).collect();
    for ((i, _), (h, x)) in pairs.iter().zip(rendered) {
        channels[*i].push(h);
        clean[*i].push(x.resized(len));
    }
    let sigma = noise_sigma_for(&clean);
    let noisy = if sigma > 0.0 {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let mut rng = source::stream_rng(seed, 1 + (i as u64) * 4096 + j as u64);
                let s: Vec<f64> =
                    clean[i][j].samples().iter().map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
                Signal::from_trusted(s, fs)
            })
            .collect::<Vec<_>>()
    } else {
        pairs.iter().map(|&(i, j)| clean[i][j].clone()).collect()
    };
    let mut out: Vec<Vec<Signal>> = receivers.iter().map(|m| Vec::with_capacity(m.len())).collect();
    for ((i, _), s) in pairs.iter().zip(noisy) {
        out[*i].push(s);
    }
    Ok((out, channels, sigma))
}

/// Mean power over `[start, end)` across all signals.
pub(crate) fn mean_power(signals: &[Vec<Signal>], start: usize, end: usize) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for s in signals.iter().flatten() {
        let end = end.min(s.len());
        for &v in &s.samples()[start.min(end)..end] {
            acc += v * v;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Renders every microphone of every device for the scene's user utterance.
pub fn record(scene: &Scene) -> Result<(Observations, GroundTruth)> {
    scene.validate()?;
    let fs = scene.sample_rate;
    let voice = make_source(scene.source, scene.duration, fs, scene.seed)?;
    let gain = 10f64.powf(scene.user.loudness_db / 20.0);
    let onset = scene.pre_roll_samples();
    let mut padded = vec![0.0; onset];
    padded.extend(voice.samples().iter().map(|v| v * gain));
    let source = Signal::from_trusted(padded, fs);

    let pattern = scene.user.pattern.pattern();
    let emitter = Emitter { position: scene.user.position, facing: scene.user.facing, pattern: &pattern };
    let receivers: Vec<Vec<Point>> = scene.devices.iter().map(mic_positions).collect();
    let voiced_end = source.len();
    let noise = scene.noise;
    let (devices, channels, noise_sigma) = render(
        &scene.room,
        &emitter,
        &receivers,
        &source,
        scene.reflection_order,
        |clean| noise_sigma(&noise, clean, onset, voiced_end),
        scene.seed,
    )?;

    let mut los_amplitudes = Vec::new();
    let mut aoas = Vec::new();
    let mut distances = Vec::new();
    for d in &scene.devices {
        let to_device = d.position - scene.user.position;
        let dist = to_device.norm();
        los_amplitudes.push(pattern.gain(to_device.angle() - scene.user.facing) / dist.max(MIN_DISTANCE));
        aoas.push(wrap_two_pi((scene.user.position - d.position).angle() - d.orientation));
        distances.push(dist);
    }
    let truth = GroundTruth {
        source,
        channels,
        los_amplitudes,
        aoas,
        distances,
        facing_device: scene.facing_device(),
        onset,
        noise_sigma,
    };
    Ok((Observations { devices }, truth))
}

fn noise_sigma(noise: &crate::scene::NoiseSpec, clean: &[Vec<Signal>], onset: usize, voiced_end: usize) -> f64 {
    if let Some(target) = noise.target_snr_tilde_db {
        // measured ratio is (Ps + Pn) / Pn
        let ps = mean_power(clean, onset, voiced_end);
        let ratio = 10f64.powf(target / 10.0) - 1.0;
        return (ps / ratio).sqrt();
    }
    if noise.floor_db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(noise.floor_db / 20.0)
    }
}

/// Known loudspeaker chirp emitted from the centre of device `emitter` and
/// captured by every other device. Entry `emitter` of the result is empty.
pub fn record_chirp(scene: &Scene, emitter: usize, duration: f64) -> Result<(Vec<Vec<Signal>>, Signal)> {
    scene.validate()?;
    let speaker = scene
        .devices
        .get(emitter)
        .ok_or_else(|| Error::InvalidInput(format!("emitter index {emitter} out of range")))?;
    let fs = scene.sample_rate;
    let chirp = make_source(SourceKind::Chirp, duration, fs, scene.seed)?;
    let onset = scene.pre_roll_samples();
    let mut padded = vec![0.0; onset];
    padded.extend_from_slice(chirp.samples());
    let source = Signal::from_trusted(padded, fs);
    let flat = omni();
    let em = Emitter { position: speaker.position, facing: 0.0, pattern: &flat };
    let receivers: Vec<Vec<Point>> = scene
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| if i == emitter { Vec::new() } else { mic_positions(d) })
        .collect();
    let noise = scene.noise;
    let end = source.len();
    let (signals, _, _) = render(
        &scene.room,
        &em,
        &receivers,
        &source,
        scene.reflection_order,
        |clean| noise_sigma(&noise, clean, onset, end),
        scene.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(emitter as u64 + 1)),
    )?;
    Ok((signals, chirp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{DevicePose, NoiseSpec, PatternId, UserPose};

    fn scene_two(order: u32, absorption: f64) -> Scene {
        Scene {
            sample_rate: 16000,
            seed: 9,
            source: SourceKind::Gaussian,
            duration: 0.25,
            pre_roll: 0.1,
            reflection_order: order,
            room: Room { width: 6.0, depth: 5.0, absorption },
            noise: NoiseSpec::OFF,
            user: UserPose {
                position: Point::new(3.0, 2.5),
                facing: 0.0,
                loudness_db: 0.0,
                pattern: PatternId::Cardioid,
            },
            devices: vec![DevicePose::new(Point::new(4.0, 2.5), 0.0), DevicePose::new(Point::new(2.0, 2.5), 0.7)],
        }
    }

    #[test]
    fn anechoic_single_tap() {
        let pattern = PatternId::Cardioid.pattern();
        let room = Room { width: 10.0, depth: 10.0, absorption: 0.3 };
        let em = Emitter { position: Point::new(2.0, 5.0), facing: 0.0, pattern: &pattern };
        let h = image_source_channel(&room, &em, Point::new(3.0, 5.0), 0, 16000);
        let delay = 16000.0 / SPEED_OF_SOUND;
        let (peak, amp) = h.argmax();
        assert_eq!(peak, delay.round() as usize);
        // off-grid tap: the band-limited peak sample is at most the true amplitude
        assert!(amp <= 1.0 + 1e-9 && amp > 0.6, "{amp}");
        // squared sinc samples of a unit tap sum to 1; the window trims a little
        assert!((h.energy() - 1.0).abs() < 0.06, "{}", h.energy());
    }

    #[test]
    fn on_grid_tap_has_exact_amplitude() {
        let h = place_taps(&[(40.0, 0.75)], 16000);
        assert!((h.taps()[40] - 0.75).abs() < 1e-15);
        assert!(h.taps().iter().enumerate().all(|(i, &t)| i == 40 || t.abs() < 1e-15));
    }

    #[test]
    fn full_absorption_matches_anechoic() {
        let s = scene_two(2, 1.0);
        for mic in 0..6 {
            let a = synth_channel(&s, 0, mic, 2).unwrap();
            let b = synth_channel(&s, 0, mic, 0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn distance_doubling_halves_amplitude() {
        let pattern = PatternId::Cardioid.pattern();
        let room = Room { width: 20.0, depth: 20.0, absorption: 0.0 };
        let em = Emitter { position: Point::new(5.0, 5.0), facing: 0.0, pattern: &pattern };
        // delays of 1 m and 2 m are not on the sample grid; compare energies
        let near = image_source_channel(&room, &em, Point::new(6.0, 5.0), 0, 16000).energy().sqrt();
        let far = image_source_channel(&room, &em, Point::new(7.0, 5.0), 0, 16000).energy().sqrt();
        assert!((near / far - 2.0).abs() < 0.01, "{}", near / far);
    }

    #[test]
    fn mic_out_of_range_is_error() {
        let s = scene_two(0, 0.5);
        assert!(synth_channel(&s, 0, 6, 0).is_err());
        assert!(synth_channel(&s, 5, 0, 0).is_err());
        assert!(synth_channel(&s, 0, 0, 4).is_err());
    }

    #[test]
    fn energy_non_increasing_in_absorption() {
        let mut last = f64::INFINITY;
        for a in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let e = synth_channel(&scene_two(2, a), 1, 3, 2).unwrap().energy();
            assert!(e <= last + 1e-12);
            last = e;
        }
    }

    #[test]
    fn frontal_device_is_louder() {
        let s = scene_two(0, 0.5);
        let (obs, truth) = record(&s).unwrap();
        for j in 0..6 {
            assert!(obs.devices[0][j].rms() > obs.devices[1][j].rms());
        }
        assert_eq!(truth.facing_device, 0);
        assert!(truth.los_amplitudes[0] > truth.los_amplitudes[1]);
    }

    #[test]
    fn record_is_deterministic() {
        let mut s = scene_two(1, 0.5);
        s.noise = NoiseSpec::target(20.0);
        let (a, _) = record(&s).unwrap();
        let (b, _) = record(&s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn true_aoa_matches_geometry() {
        let s = scene_two(0, 0.5);
        let (_, truth) = record(&s).unwrap();
        for (i, d) in s.devices.iter().enumerate() {
            let v = s.user.position - d.position;
            let want = wrap_two_pi(v.y.atan2(v.x) - d.orientation);
            assert!((truth.aoas[i] - want).abs() < 1e-12);
            assert!((truth.distances[i] - v.norm()).abs() < 1e-12);
        }
    }
}
