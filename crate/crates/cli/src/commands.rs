use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rtf_mclp::batch_derev::{rtf_from_rir, run_cascade, run_rtf_mclp, run_sdb, run_wpe, BatchOutput, BinVectors};
use rtf_mclp::filters::{FilterLog, FilterShape};
use rtf_mclp::metrics::{
    effective_rir, fwsnr, interferer_residual, llr, peak_index, schroeder_edc, tail_energy_db,
};
use rtf_mclp::online_derev::{run_online_observed, FilterRecorder, FrameObserver};
use rtf_mclp::rir_sim::{image_rirs, render_moving, sir_gain, source_images, RirOptions, MOVING_RIR_HOP};
use rtf_mclp::speech::synthesize_utterance;
use rtf_mclp::stft::analyze;
use serde_json::{json, Value};

use crate::config::{LoadedScene, Method};
use crate::error::CliError;
use crate::wav;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write_text(path, &text)
}

/// Parameters shared by every command's sidecar.
fn provenance(command: &str, scene: &LoadedScene, seed: u64, overrides: &[String], extra: Value) -> Value {
    json!({
        "tool": "rtf-mclp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "scene_file": scene.source,
        "overrides": overrides,
        "config": serde_json::to_value(&scene.file).expect("scene serializes"),
        "details": extra,
    })
}

/// `duration` seconds of speech for source `index`, built from consecutive
/// 5 s utterances seeded from `seed`.
fn speech(seed: u64, index: usize, duration: f64, scene: &LoadedScene) -> Vec<f64> {
    let fs = scene.file.scene.sample_rate;
    let voice = if index == 0 {
        scene.file.scene.voice
    } else {
        scene.file.scene.voice.other()
    };
    let len = (duration * fs as f64).round() as usize;
    let base = seed.wrapping_mul(1000).wrapping_add(100 * index as u64);
    let mut s = Vec::with_capacity(len);
    let mut i = 0;
    while s.len() < len {
        s.extend(synthesize_utterance(base.wrapping_add(i), 5.0, fs, voice.voice()));
        i += 1;
    }
    s.truncate(len);
    s
}

fn direct_only() -> RirOptions {
    RirOptions {
        max_order: Some(0),
        ..RirOptions::default()
    }
}

fn add_into(acc: &mut [Vec<f64>], other: &[Vec<f64>], gain: f64) {
    for (a, b) in acc.iter_mut().zip(other) {
        for (u, v) in a.iter_mut().zip(b) {
            *u += gain * v;
        }
    }
}

fn scaled(x: &[Vec<f64>], gain: f64) -> Vec<Vec<f64>> {
    x.iter().map(|c| c.iter().map(|v| v * gain).collect()).collect()
}

/// Renders the mixture, per-source direct-path references at the reference
/// mic, the interferer's array image and the RIRs.
pub fn simulate(scene: &LoadedScene, out: &Path, seed: u64, overrides: &[String]) -> Result<(), CliError> {
    create_dir(out)?;
    let s = &scene.file.scene;
    let fs = s.sample_rate;
    let reference = scene.file.method.reference_mic;
    let desired = speech(seed, 0, s.duration, scene);
    let mut written = Vec::new();
    let mut emit = |name: &str, channels: &[Vec<f64>]| -> Result<(), CliError> {
        wav::write(&out.join(name), channels, fs)?;
        written.push(name.to_string());
        Ok(())
    };

    let (mut mixture, desired_direct, rir0) = match scene.trajectory()? {
        None => {
            let only = |options| -> rtf_mclp::Result<_> {
                let mut sc = scene.static_scene(options)?;
                sc.sources.truncate(1);
                Ok(sc)
            };
            let reverberant = only(RirOptions::default())?;
            let image = source_images(&reverberant, std::slice::from_ref(&desired), fs)?.remove(0);
            let direct = source_images(&only(direct_only())?, std::slice::from_ref(&desired), fs)?.remove(0);
            (image, direct[reference].clone(), reverberant.rirs()?.remove(0))
        }
        Some(traj) => {
            let room = scene.room()?;
            let array = scene.array()?;
            let image = render_moving(&room, &array, &traj, &desired, fs, MOVING_RIR_HOP, &RirOptions::default())?;
            let direct = render_moving(&room, &array, &traj, &desired, fs, MOVING_RIR_HOP, &direct_only())?;
            let rirs = image_rirs(&room, &s.source, &array, &RirOptions::default())?;
            (image, direct[reference].clone(), rirs)
        }
    };
    emit("source0_direct.wav", std::slice::from_ref(&desired_direct))?;
    emit("rir_source0.wav", &rir0)?;

    if let Some(position) = s.interferer {
        let mut sc = scene.static_scene(RirOptions::default())?;
        sc.sources = vec![position];
        let signal = speech(seed, 1, s.duration, scene);
        let image = source_images(&sc, std::slice::from_ref(&signal), fs)?.remove(0);
        let gain = sir_gain(&mixture[reference], &image[reference], s.sir_db);
        let direct = source_images(&rtf_mclp::rir_sim::Scene { rir: direct_only(), ..sc.clone() }, &[signal], fs)?.remove(0);
        add_into(&mut mixture, &image, gain);
        emit("source1_image.wav", &scaled(&image, gain))?;
        emit("source1_direct.wav", &[direct[reference].iter().map(|v| v * gain).collect()])?;
        emit("rir_source1.wav", &sc.rirs()?.remove(0))?;
    }
    emit("mixture.wav", &mixture)?;
    let record = provenance(
        "simulate",
        scene,
        seed,
        overrides,
        json!({ "outputs": written, "samples": mixture[0].len(), "rir_hop_s": MOVING_RIR_HOP }),
    );
    write_json(&out.join("provenance.json"), &record)
}

pub struct EnhanceArgs<'a> {
    pub method: Method,
    pub input: PathBuf,
    pub known_rtf: Option<&'a Path>,
    pub log_filters: bool,
}

fn load_known_rtf(scene: &LoadedScene, path: &Path) -> Result<BinVectors, CliError> {
    let (rirs, fs) = wav::read(path)?;
    let stft = scene.stft();
    if fs != stft.sample_rate {
        return Err(CliError::Config(format!("{}: RIRs at {fs} Hz, scene at {} Hz", path.display(), stft.sample_rate)));
    }
    Ok(rtf_from_rir(&rirs, scene.file.method.reference_mic, fs, stft.fft_size, scene.file.method.known_rtf_ms)?)
}

/// Runs one dereverberation method on a mixture WAV.
pub fn enhance(scene: &LoadedScene, out: &Path, args: &EnhanceArgs, seed: u64, overrides: &[String]) -> Result<(), CliError> {
    let (x, fs) = wav::read(&args.input)?;
    let stft = scene.stft();
    if fs != stft.sample_rate {
        return Err(CliError::Config(format!("{}: mixture at {fs} Hz, scene at {} Hz", args.input.display(), stft.sample_rate)));
    }
    let array = scene.array()?;
    if x.len() != array.len() {
        return Err(CliError::Config(format!(
            "{}: mixture has {} channels, scene array has {} mics",
            args.input.display(),
            x.len(),
            array.len()
        )));
    }
    let known = args.known_rtf.map(|p| load_known_rtf(scene, p)).transpose()?;
    if known.is_some() && matches!(args.method, Method::Wpe | Method::Sdb) {
        return Err(CliError::Config(format!("--known-rtf has no effect on {}", args.method.name())));
    }
    create_dir(out)?;
    let tensor = analyze(&x, &stft)?;
    let start = Instant::now();
    let mut timing = json!({ "method": args.method.name(), "frames": tensor.frames() });
    let (waveform, log) = match args.method {
        Method::OnlineRtfMclp => {
            let config = rtf_mclp::online_derev::OnlineConfig {
                known_rtf: known,
                ..scene.online()
            };
            let mut recorder = FilterRecorder::default();
            let mut observers: Vec<&mut dyn FrameObserver> = Vec::new();
            if args.log_filters {
                observers.push(&mut recorder);
            }
            let output = run_online_observed(&tensor, &config, &mut observers)?;
            timing["mean_frame_s"] = json!(output.report.mean_frame_time());
            timing["rtf_updates"] = json!(output.report.rtf_updates);
            timing["known_rtf"] = json!(config.known_rtf.is_some());
            let log = args.log_filters.then(|| {
                recorder.into_log(FilterShape {
                    mics: array.len(),
                    taps: config.taps,
                    delay: config.delay,
                    bins: tensor.bins(),
                    reference_mic: config.reference_mic,
                })
            });
            (output.waveform, log)
        }
        batch => {
            let config = rtf_mclp::batch_derev::BatchConfig {
                known_rtf: known,
                ..scene.batch()
            };
            let output: BatchOutput = match batch {
                Method::RtfMclp => run_rtf_mclp(&tensor, &config)?,
                Method::Wpe => run_wpe(&tensor, &config)?,
                Method::Cascade => run_cascade(&tensor, &config)?,
                Method::Sdb => {
                    let c = array.center();
                    let p = scene.file.scene.source;
                    run_sdb(&tensor, &array, [p[0] - c[0], p[1] - c[1], p[2] - c[2]], &scene.sdb())?
                }
                Method::OnlineRtfMclp => unreachable!(),
            };
            (output.waveform, Some(output.filters))
        }
    };
    timing["seconds"] = json!(start.elapsed().as_secs_f64());
    wav::write_mono(&out.join("enhanced.wav"), &waveform, fs)?;
    if let Some(log) = &log {
        log.save(&out.join("filters.log"))?;
    }
    write_json(&out.join("timing.json"), &timing)?;
    let record = provenance(
        "enhance",
        scene,
        seed,
        overrides,
        json!({
            "input": args.input.display().to_string(),
            "method": args.method.name(),
            "known_rtf": args.known_rtf.map(|p| p.display().to_string()),
            "filters_logged": log.is_some(),
        }),
    );
    write_json(&out.join("provenance.json"), &record)
}

pub struct EvaluateArgs<'a> {
    pub reference: &'a Path,
    pub test: &'a Path,
    pub interferer: Option<&'a Path>,
    pub filters: Option<&'a Path>,
    pub tracks: bool,
}

fn read_mono(path: &Path) -> Result<(Vec<f64>, u32), CliError> {
    let (mut ch, fs) = wav::read(path)?;
    if ch.is_empty() {
        return Err(CliError::Config(format!("{}: no channels", path.display())));
    }
    Ok((ch.swap_remove(0), fs))
}

/// FwSNR and LLR of `test` against `reference`, and optionally the
/// interferer energy left by a logged filter set.
pub fn evaluate(out: &Path, args: &EvaluateArgs) -> Result<Value, CliError> {
    let (reference, fs) = read_mono(args.reference)?;
    let (test, fs_test) = read_mono(args.test)?;
    if fs != fs_test {
        return Err(CliError::Config(format!("sample rates differ: {fs} Hz vs {fs_test} Hz")));
    }
    if reference.len() != test.len() {
        return Err(CliError::Config(format!(
            "misaligned inputs: reference has {} samples, test has {}",
            reference.len(),
            test.len()
        )));
    }
    create_dir(out)?;
    let (fw, fw_track) = fwsnr(&reference, &test, fs)?;
    let (ll, ll_track) = llr(&reference, &test, fs)?;
    let mut summary = json!({
        "fwsnr_db": fw,
        "llr": ll,
        "segments": fw_track.len(),
        "active_segments": fw_track.active.iter().filter(|a| **a).count(),
    });
    if args.tracks {
        write_text(&out.join("fwsnr.csv"), &fw_track.to_csv())?;
        write_text(&out.join("llr.csv"), &ll_track.to_csv())?;
    }
    match (args.interferer, args.filters) {
        (Some(ip), Some(fp)) => {
            let (image, fs_i) = wav::read(ip)?;
            if fs_i != fs {
                return Err(CliError::Config(format!("{}: {fs_i} Hz, reference at {fs} Hz", ip.display())));
            }
            let log = FilterLog::load(fp)?;
            let config = rtf_mclp::stft::StftConfig {
                sample_rate: fs,
                ..Default::default()
            };
            let tensor = analyze(&image, &config)?;
            summary["interferer_residual_db"] = json!(interferer_residual(&tensor, &log)?);
        }
        (None, None) => {}
        _ => return Err(CliError::Config("--interferer and --filters go together".into())),
    }
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Effective RIR and EDCs of a batch method on the scene's desired source.
pub fn rir_report(
    scene: &LoadedScene,
    out: &Path,
    method: Method,
    known_rtf: Option<&Path>,
    seed: u64,
    overrides: &[String],
) -> Result<Value, CliError> {
    if method == Method::OnlineRtfMclp {
        return Err(CliError::Config("rir-report needs a batch method; online filters vary over time".into()));
    }
    let mut sc = scene.static_scene(RirOptions::default())?;
    sc.sources.truncate(1);
    let stft = scene.stft();
    let fs = stft.sample_rate;
    let signal = speech(seed, 0, scene.file.scene.duration, scene);
    let x = source_images(&sc, &[signal], fs)?.remove(0);
    let tensor = analyze(&x, &stft)?;
    let config = rtf_mclp::batch_derev::BatchConfig {
        known_rtf: known_rtf.map(|p| load_known_rtf(scene, p)).transpose()?,
        ..scene.batch()
    };
    let output = match method {
        Method::RtfMclp => run_rtf_mclp(&tensor, &config)?,
        Method::Wpe => run_wpe(&tensor, &config)?,
        Method::Cascade => run_cascade(&tensor, &config)?,
        Method::Sdb => {
            let c = sc.array.center();
            let p = sc.sources[0];
            run_sdb(&tensor, &sc.array, [p[0] - c[0], p[1] - c[1], p[2] - c[2]], &scene.sdb())?
        }
        Method::OnlineRtfMclp => unreachable!(),
    };
    let rirs = sc.rirs()?.remove(0);
    let reference = scene.file.method.reference_mic;
    let h = &rirs[reference];
    let eff = effective_rir(&rirs, &output.filters, &stft, true)?;
    create_dir(out)?;
    let edc_in = schroeder_edc(h)?;
    let edc_eff = schroeder_edc(&eff)?;
    let mut rir_csv = String::from("time_s,input,effective\n");
    let mut edc_csv = String::from("time_s,input_db,effective_db\n");
    for t in 0..h.len() {
        let time = t as f64 / fs as f64;
        let _ = writeln!(rir_csv, "{time:.6},{:.9e},{:.9e}", h[t], eff[t]);
        let _ = writeln!(edc_csv, "{time:.6},{:.4},{:.4}", edc_in[t].max(-300.0), edc_eff[t].max(-300.0));
    }
    write_text(&out.join("rir.csv"), &rir_csv)?;
    write_text(&out.join("edc.csv"), &edc_csv)?;
    let peak = peak_index(h);
    let tail = peak + (scene.file.metrics.tail_ms * 1e-3 * fs as f64).round() as usize;
    let summary = json!({
        "method": method.name(),
        "tail_start_s": tail as f64 / fs as f64,
        "tail_input_db": tail_energy_db(h, tail),
        "tail_effective_db": tail_energy_db(&eff, tail),
        "direct_tap_change_db": 20.0 * (eff[peak].abs() / h[peak].abs()).log10(),
    });
    write_json(&out.join("summary.json"), &summary)?;
    let record = provenance("rir-report", scene, seed, overrides, summary.clone());
    write_json(&out.join("provenance.json"), &record)?;
    Ok(summary)
}
