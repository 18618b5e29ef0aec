//! WAV export of recordings with a JSON ground-truth sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GroundTruth, Observations};
use crate::error::{Error, Result};
use crate::scene::{DevicePose, Scene};
use crate::Signal;

/// Ground truth written next to the WAV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    /// The generating scene as TOML (JSON cannot carry a `-inf` noise floor).
    pub scene_toml: String,
    pub los_amplitudes: Vec<f64>,
    pub aoas_rad: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub facing_device: usize,
    pub onset_sample: usize,
    pub noise_sigma: f64,
}

impl TruthSidecar {
    pub fn new(scene: &Scene, truth: &GroundTruth) -> Result<Self> {
        Ok(Self {
            scene_toml: scene.to_toml_string()?,
            los_amplitudes: truth.los_amplitudes.clone(),
            aoas_rad: truth.aoas.clone(),
            distances_m: truth.distances.clone(),
            facing_device: truth.facing_device,
            onset_sample: truth.onset,
            noise_sigma: truth.noise_sigma,
        })
    }

    pub fn scene(&self) -> Result<Scene> {
        Scene::from_toml_str(&self.scene_toml)
    }
}

pub fn mic_file_name(device: usize, mic: usize) -> String {
    format!("dev{device:02}_mic{mic:02}.wav")
}

fn wav_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 32, sample_format: hound::SampleFormat::Float }
}

pub(crate) fn write_wav(path: &Path, signal: &Signal) -> Result<()> {
    let mut w = hound::WavWriter::create(path, wav_spec(signal.sample_rate()))?;
    for &s in signal.samples() {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads a mono WAV; decode errors name the file.
pub(crate) fn read_wav(path: &Path) -> Result<Signal> {
    read_wav_inner(path).map_err(|e| match e {
        Error::Wav(w) => Error::InvalidInput(format!("{}: {w}", path.display())),
        other => other,
    })
}

fn read_wav_inner(path: &Path) -> Result<Signal> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidInput(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>().map(|s| s.map(|v| v as f64 / full)).collect::<std::result::Result<_, _>>()?
        }
    };
    Signal::new(samples, spec.sample_rate)
}

/// Writes one WAV per microphone, `source.wav` and `truth.json` into `dir`.
/// Returns the paths written.
pub fn write_observations(dir: &Path, scene: &Scene, obs: &Observations, truth: &GroundTruth) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, mics) in obs.devices.iter().enumerate() {
        for (j, s) in mics.iter().enumerate() {
            let p = dir.join(mic_file_name(i, j));
            write_wav(&p, s)?;
            written.push(p);
        }
    }
    let p = dir.join("source.wav");
    write_wav(&p, &truth.source)?;
    written.push(p);
    let p = dir.join("truth.json");
    fs::write(&p, serde_json::to_string_pretty(&TruthSidecar::new(scene, truth)?)?)?;
    written.push(p);
    Ok(written)
}

/// Reads `devNN_micMM.wav` files for the mic counts of `devices`. All files
/// must exist and share one sample rate; shorter ones are zero-padded.
pub fn read_observations(dir: &Path, devices: &[DevicePose]) -> Result<Observations> {
    let paths: Vec<Vec<PathBuf>> = devices
        .iter()
        .enumerate()
        .map(|(i, d)| (0..d.mic_count).map(|j| dir.join(mic_file_name(i, j))).collect())
        .collect();
    let missing: Vec<String> =
        paths.iter().flatten().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!("missing microphone files: {}", missing.join(", "))));
    }
    let devices: Vec<Vec<Signal>> =
        paths.iter().map(|mics| mics.iter().map(|p| read_wav(p)).collect::<Result<_>>()).collect::<Result<_>>()?;
    let all: Vec<&Signal> = devices.iter().flatten().collect();
    crate::dsp::check_rates(&all)?;
    let len = all.iter().map(|s| s.len()).max().unwrap_or(0);
    let devices = devices.into_iter().map(|m| m.into_iter().map(|s| s.resized(len)).collect()).collect();
    Ok(Observations { devices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::record;

    #[test]
    fn wav_round_trip() {
        let mut scene = crate::scene::tests::sample_scene();
        scene.duration = 0.1;
        scene.reflection_order = 0;
        let (obs, truth) = record(&scene).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_observations(dir.path(), &scene, &obs, &truth).unwrap();
        assert_eq!(files.len(), scene.devices.len() * 6 + 2);
        let back = read_observations(dir.path(), &scene.devices).unwrap();
        for (a, b) in obs.devices.iter().flatten().zip(back.devices.iter().flatten()) {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3));
            }
        }
        let side: TruthSidecar =
            serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
        assert_eq!(side.scene().unwrap(), scene);
        assert_eq!(side.facing_device, truth.facing_device);
    }

    #[test]
    fn missing_and_truncated_files_are_named() {
        let mut scene = crate::scene::tests::sample_scene();
        scene.duration = 0.1;
        scene.reflection_order = 0;
        let (obs, truth) = record(&scene).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_observations(dir.path(), &scene, &obs, &truth).unwrap();
        fs::remove_file(dir.path().join(mic_file_name(0, 2))).unwrap();
        fs::remove_file(dir.path().join(mic_file_name(1, 5))).unwrap();
        let msg = read_observations(dir.path(), &scene.devices).unwrap_err().to_string();
        assert!(msg.contains("dev00_mic02.wav") && msg.contains("dev01_mic05.wav"), "{msg}");

        let dir = tempfile::tempdir().unwrap();
        write_observations(dir.path(), &scene, &obs, &truth).unwrap();
        let p = dir.path().join(mic_file_name(1, 1));
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..30]).unwrap();
        let msg = read_observations(dir.path(), &scene.devices).unwrap_err().to_string();
        assert!(msg.contains("dev01_mic01.wav"), "{msg}");
    }
}
