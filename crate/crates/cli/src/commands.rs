use std::fs;
use std::path::Path;

use anyhow::anyhow;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use facedir::aoa::{estimate_aoa_with, AoaParams, LagInterpolation};
use facedir::evalkit::{
    converge_study, run_benchmark, write_converge_csv, write_summary_json, write_trials_csv, ConvergeConfig,
    SuiteConfig,
};
use facedir::facing::{infer as run_inference, DECISION_CSV_HEADER};
use facedir::locate::{
    align_similarity, filter_reliable, measure_pairwise_aoas, p2p_localize, ChirpParams, DeviceLayout, Gauge, Loss,
    P2pParams, PairwiseAoas,
};
use facedir::scene::{PatternId, Scene};
use facedir::simulate::{read_observations, record, write_observations, TruthSidecar};

use crate::args::Interp;
use crate::{AoaArgs, ConvergeArgs, EvalArgs, Failure, InferArgs, LossArg, P2pArgs, Preset, SimulateArgs};

type CmdResult<T = ()> = Result<T, Failure>;

fn config<T, E: Into<anyhow::Error>>(r: Result<T, E>, ctx: impl FnOnce() -> String) -> CmdResult<T> {
    r.map_err(|e| Failure::Config(e.into().context(ctx())))
}

fn runtime<T, E: Into<anyhow::Error>>(r: Result<T, E>, ctx: impl FnOnce() -> String) -> CmdResult<T> {
    r.map_err(|e| Failure::Runtime(e.into().context(ctx())))
}

/// Written as `manifest.json` next to every output set.
#[derive(Debug, Serialize)]
struct RunManifest<'a, P: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: Option<&'a Path>,
    output_dir: &'a Path,
    seed: Option<u64>,
    parameters: &'a P,
    outputs: Vec<String>,
}

fn write_manifest<P: Serialize>(
    subcommand: &str,
    config_path: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    parameters: &P,
    outputs: &[&str],
) -> CmdResult {
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config: config_path,
        output_dir: out,
        seed,
        parameters,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let path = out.join("manifest.json");
    let text = runtime(serde_json::to_string_pretty(&m), || "serializing manifest".into())?;
    runtime(fs::write(&path, text + "\n"), || format!("writing {}", path.display()))
}

fn create_dir(out: &Path) -> CmdResult {
    runtime(fs::create_dir_all(out), || format!("creating {}", out.display()))
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> facedir::Result<()>) -> CmdResult {
    let mut buf = Vec::new();
    runtime(f(&mut buf), || format!("encoding {}", path.display()))?;
    runtime(fs::write(path, buf), || format!("writing {}", path.display()))
}

fn load_scene(path: &Path) -> CmdResult<Scene> {
    config(Scene::load(path), || format!("loading scene {}", path.display()))
}

/// The explicit layout file, or the scene stored in the recording's truth sidecar.
fn load_layout(obs: &Path, layout: Option<&Path>) -> CmdResult<DeviceLayout> {
    if let Some(p) = layout {
        return config(DeviceLayout::load(p), || format!("loading layout {}", p.display()));
    }
    let side = obs.join("truth.json");
    let text = config(fs::read_to_string(&side), || format!("no --layout given and {} is unreadable", side.display()))?;
    let truth: TruthSidecar = config(serde_json::from_str(&text), || format!("parsing {}", side.display()))?;
    let scene = config(truth.scene(), || format!("scene inside {}", side.display()))?;
    Ok(DeviceLayout::from_scene(&scene))
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let mut scene = load_scene(&a.config)?;
    if let Some(s) = a.seed {
        scene.seed = s;
    }
    if let Some(o) = a.reflection_order {
        scene.reflection_order = o;
    }
    if let Some(snr) = a.snr {
        scene.noise = facedir::scene::NoiseSpec::target(snr);
    }
    config(scene.validate(), || format!("scene {} after overrides", a.config.display()))?;
    let (obs, truth) = runtime(record(&scene), || "simulating".into())?;
    let files = runtime(write_observations(&a.out, &scene, &obs, &truth), || format!("writing {}", a.out.display()))?;
    write_manifest("simulate", Some(&a.config), &a.out, Some(scene.seed), a, &["*.wav", "truth.json"])?;
    println!("wrote {} files to {}", files.len() + 1, a.out.display());
    println!("facing device: {}", truth.facing_device);
    Ok(())
}

pub fn infer(a: &InferArgs) -> CmdResult {
    let layout = load_layout(&a.obs, a.layout.as_deref())?;
    let obs = runtime(read_observations(&a.obs, &layout.devices), || format!("reading {}", a.obs.display()))?;
    let pattern = PatternId::from(a.pattern).pattern();
    let d = runtime(run_inference(&obs, &layout, &pattern, &a.tunables.params()), || "inference".into())?;
    if a.json {
        let text = runtime(serde_json::to_string_pretty(&d), || "serializing decision".into())?;
        println!("{text}");
    } else {
        let p = d.user_location.position;
        println!("facing device: {}", d.device_index);
        println!("user location: ({:.3}, {:.3}) m, cluster of {}", p.x, p.y, d.user_location.cluster_size);
        let state = if d.converged {
            "converged"
        } else if d.diverged {
            "diverged"
        } else {
            "iteration cap"
        };
        println!("iterations: {} ({state})", d.iterations_used);
        println!("{}", DECISION_CSV_HEADER.join("\t"));
        for r in d.csv_records() {
            println!("{}", r.join("\t"));
        }
    }
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("decision.json"), |w| Ok(serde_json::to_writer_pretty(w, &d)?))?;
        write_file(&out.join("decision.csv"), |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(DECISION_CSV_HEADER)?;
            for r in d.csv_records() {
                c.write_record(&r)?;
            }
            c.flush()?;
            Ok(())
        })?;
        write_manifest("infer", a.layout.as_deref(), out, None, a, &["decision.json", "decision.csv"])?;
    }
    Ok(())
}

pub fn aoa(a: &AoaArgs) -> CmdResult {
    let layout = load_layout(&a.obs, a.layout.as_deref())?;
    let obs = runtime(read_observations(&a.obs, &layout.devices), || format!("reading {}", a.obs.display()))?;
    let params = AoaParams {
        interpolation: match a.interpolation {
            Interp::Sinc => LagInterpolation::Sinc,
            Interp::Parabolic => LagInterpolation::Parabolic,
        },
        ..AoaParams::default()
    };
    let mut rows = Vec::new();
    for (i, (mics, dev)) in obs.devices.iter().zip(&layout.devices).enumerate() {
        let e = runtime(estimate_aoa_with(mics, dev, &params), || format!("device {i}"))?;
        rows.push(serde_json::json!({
            "device": i,
            "angle_deg": e.degrees(),
            "confidence": e.confidence,
            "degenerate": e.degenerate,
        }));
    }
    if a.json {
        println!("{}", serde_json::Value::Array(rows));
    } else {
        println!("device\tangle_deg\tconfidence");
        for r in &rows {
            println!(
                "{}\t{:.2}\t{:.3}",
                r["device"],
                r["angle_deg"].as_f64().unwrap_or(f64::NAN),
                r["confidence"].as_f64().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let mut suite = match &a.suite {
        Some(p) => {
            let text = config(fs::read_to_string(p), || format!("reading suite {}", p.display()))?;
            config(SuiteConfig::from_toml_str(&text), || format!("parsing suite {}", p.display()))?
        }
        None => match a.preset {
            Preset::Standard => SuiteConfig::standard(200),
            Preset::Smoke => SuiteConfig { name: "smoke".into(), ..SuiteConfig::standard(20) },
            Preset::Devices => SuiteConfig::device_sweep(100),
            Preset::Snr => SuiteConfig::snr_sweep(100),
        },
    };
    if let Some(t) = a.trials {
        suite.trials = t;
    }
    if let Some(s) = a.seed {
        suite.seed = s;
    }
    if let Some(p) = a.pattern {
        suite.infer_pattern = Some(p.into());
    }
    if let Some(o) = a.reflection_order {
        suite.scene.reflection_order = o;
    }
    if let Some(x) = a.absorption {
        suite.scene.absorption = x;
    }
    suite.record_runtime |= a.record_runtime;
    config(suite.validate(), || "suite".into())?;
    if suite.scene.reflection_order > 3 || !(0.0..=1.0).contains(&suite.scene.absorption) {
        return Err(Failure::Config(anyhow!("reflection order must be 0..=3 and absorption in [0, 1]")));
    }
    let result = runtime(run_benchmark(&suite, &a.tunables.params(), a.jobs), || format!("suite {}", suite.name))?;
    create_dir(&a.out)?;
    write_file(&a.out.join("trials.csv"), |w| write_trials_csv(&result.rows, w))?;
    write_file(&a.out.join("summary.json"), |w| write_summary_json(&result.summary, w))?;
    #[derive(Serialize)]
    struct Params<'a> {
        args: &'a EvalArgs,
        suite: &'a SuiteConfig,
    }
    write_manifest(
        "eval",
        a.suite.as_deref(),
        &a.out,
        Some(suite.seed),
        &Params { args: a, suite: &suite },
        &["trials.csv", "summary.json"],
    )?;
    let s = &result.summary;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    println!("suite {}: {} trials, {} failed", suite.name, s.trials, s.failures);
    println!("accuracy: {:.3}", s.accuracy);
    println!("median FDE: {} deg", fmt(s.median_fde_deg));
    println!("median localization error: {} m", fmt(s.median_loc_error_m));
    println!("FIE histogram: {:?}", s.fie_histogram);
    Ok(())
}

pub fn converge(a: &ConvergeArgs) -> CmdResult {
    let cfg = ConvergeConfig {
        seed: a.seed,
        trials: a.trials,
        snr_grid_db: a.snr.clone(),
        sources: a.sources.iter().map(|&s| s.into()).collect(),
        devices: a.devices,
        reflection_order: a.reflection_order,
        absorption: a.absorption,
        iterations: a.iterations,
        ..ConvergeConfig::default()
    };
    if cfg.reflection_order > 3 || !(0.0..=1.0).contains(&cfg.absorption) {
        return Err(Failure::Config(anyhow!("reflection order must be 0..=3 and absorption in [0, 1]")));
    }
    let rows = match converge_study(&cfg, &a.tunables.params(), a.jobs) {
        Err(e @ facedir::Error::InvalidInput(_)) => return Err(Failure::Config(e.into())),
        r => runtime(r, || "convergence study".into())?,
    };
    create_dir(&a.out)?;
    write_file(&a.out.join("converge.csv"), |w| write_converge_csv(&rows, w))?;
    write_manifest("converge", None, &a.out, Some(a.seed), a, &["converge.csv"])?;
    for r in rows.iter().filter(|r| r.iteration + 1 == cfg.iterations) {
        println!("snr {} {}: final correlation {:.3}", r.snr, r.source.as_str(), r.correlation);
    }
    Ok(())
}

pub fn p2p(a: &P2pArgs) -> CmdResult {
    let scene = load_scene(&a.config)?;
    let n = scene.devices.len();
    if a.anchor >= n || a.scale_device >= n || a.anchor == a.scale_device {
        return Err(Failure::Config(anyhow!("--anchor and --scale-device must be distinct devices below {n}")));
    }
    let measured = if a.exact {
        PairwiseAoas::from_poses(&scene.devices)
    } else {
        let params = ChirpParams { duration: a.chirp_ms * 1e-3, reg: a.reg };
        runtime(measure_pairwise_aoas(&scene, &params), || "measuring pairwise directions".into())?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let noisy = config(measured.perturbed(a.sigma_deg.to_radians(), &mut rng), || "--sigma-deg".into())?;
    let reliable = filter_reliable(&noisy, a.tol_deg.to_radians());
    let gauge = Gauge::from_poses(&scene.devices, a.anchor, a.scale_device);
    let params = P2pParams {
        starts: a.starts,
        seed: a.seed,
        loss: match a.loss {
            LossArg::Squared => Loss::Squared,
            LossArg::Absolute => Loss::Absolute,
        },
        ..P2pParams::default()
    };
    let layout = runtime(p2p_localize(&reliable, &gauge, &params), || "peer-to-peer localization".into())?
        .with_arrays(&scene.devices);
    let truth: Vec<_> = scene.devices.iter().map(|d| d.position).collect();
    let est = layout.positions();
    let errors: Vec<f64> = est.iter().zip(&truth).map(|(e, t)| e.dist(*t)).collect();
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let (_, aligned_rms) = align_similarity(&est, &truth);

    create_dir(&a.out)?;
    let layout_path = a.out.join("layout.toml");
    runtime(layout.save(&layout_path), || format!("writing {}", layout_path.display()))?;
    write_file(&a.out.join("devices.csv"), |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["device", "x_m", "y_m", "orientation_deg", "error_m"])?;
        for (i, (d, e)) in layout.devices.iter().zip(&errors).enumerate() {
            c.write_record([
                i.to_string(),
                d.position.x.to_string(),
                d.position.y.to_string(),
                d.orientation.to_degrees().to_string(),
                e.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    write_manifest("p2p", Some(&a.config), &a.out, Some(a.seed), a, &["layout.toml", "devices.csv"])?;
    println!("pairs used: {} of {}", reliable.len(), noisy.len());
    println!("residual_rms: {:e}", layout.residual_rms);
    println!("position_rms_m: {rms:e}");
    println!("aligned_rms_m: {aligned_rms:e}");
    Ok(())
}
