mod grid;
mod out;
mod settings;

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avse_core::dsp::{oracle_mask, EnhancerSpec, ModelTier, StftConfig};
use avse_core::metrics::{self, RunReport, SweepKind};
use avse_core::par::Strategy;
use avse_core::pipeline::{self, live, EventLog, MediaSource, Mode, PipelineConfig, RunOutput};
use avse_core::scene::{mix, synth_scene, SceneParams};
use avse_core::{config, wav, Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use toml::{Table, Value};

use crate::grid::Grid;
use crate::out::{io_err, OutDir};

/// Chunked audio-visual speech enhancement: scene synthesis, pipeline runs
/// (simulated or over loopback TCP), sweeps and reports.
///
/// Exit codes: 0 ok, 1 I/O failure, 2 invalid configuration, 3 protocol errors.
#[derive(Parser)]
#[command(name = "avse", version)]
struct Cli {
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a seeded acoustic scene to WAV files and mouth-region frames.
    Synth(SynthArgs),
    /// Run the streaming pipeline and write its event log and report.
    Run(RunArgs),
    /// Run a named parameter sweep and write it as CSV.
    Sweep(SweepArgs),
    /// Rebuild a latency report from an events CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set channel.loss_rate=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; nothing is written outside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip writing mouth-region frames.
    #[arg(long)]
    no_frames: bool,
    /// Write mixture spectrogram and oracle mask grids as CSV.
    #[arg(long)]
    grids: bool,
    /// Also render grids as PNG heatmaps.
    #[arg(long, requires = "grids")]
    png: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunMode {
    Sim,
    /// Server and client in one process over 127.0.0.1.
    Loopback,
    LiveServer,
    LiveClient,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Defaults to `sim` or `loopback` following the config's `mode`.
    #[arg(long, value_enum)]
    mode: Option<RunMode>,
    /// Channel seed; also seeds the synthetic input.
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds of synthetic input when no --input is given.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Mixture WAV to stream instead of a synthetic scene.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Clean reference WAV, used by oracle enhancement and for SNR scoring.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Channel preset name (replaces the config's channel).
    #[arg(long)]
    channel: Option<String>,
    /// Compress video at this quality (1-100).
    #[arg(long)]
    quality: Option<u8>,
    /// Send audio only.
    #[arg(long)]
    no_video: bool,
    #[arg(long)]
    t_chunk: Option<f64>,
    #[arg(long)]
    t_i: Option<f64>,
    #[arg(long)]
    t_delta: Option<f64>,
    /// passthrough, oracle_mask, spectral_subtraction, visual_gated or emulated.
    #[arg(long)]
    enhancer: Option<String>,
    /// Enhancer latency, seconds.
    #[arg(long)]
    t_a: Option<f64>,
    /// Emulated model tier: model1, model2 or model3 (replaces the enhancer).
    #[arg(long)]
    tier: Option<String>,
    /// Listen address (live-server) or server address (live-client).
    #[arg(long)]
    addr: Option<String>,
    /// Client sessions to serve before exiting (live-server).
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    /// Write the played audio spectrogram as CSV.
    #[arg(long)]
    grids: bool,
    #[arg(long, requires = "grids")]
    png: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// networks, compression or chunk_size.
    name: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Events CSV (`chunk_seq,event,t`).
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value_t = avse_core::T_CHUNK)]
    t_chunk: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let res = match cli.cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Run(a) => run(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Report(a) => report(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Wav(_) | Error::Socket(_) => 1,
        Error::Protocol(_) | Error::Codec(_) => 3,
        _ => 2,
    }
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let mut table = settings::read_table(a.common.config.as_deref())?;
    settings::apply(&mut table, &a.common.overrides)?;
    let params: SceneParams = settings::resolve(table)?;
    let m = mix(&synth_scene(&params, a.seed)?)?;
    let clean = m.clean_sum();

    let mut out = OutDir::create(&a.common.out)?;
    out.write("scene.toml", config::to_string(&params)?)?;
    wav::write(out.file("clean.wav")?, &clean)?;
    wav::write(out.file("interference.wav")?, &m.interference)?;
    wav::write(out.file("mixture.wav")?, &m.mixture)?;
    if m.clean_refs.len() > 1 {
        for (k, c) in m.clean_refs.iter().enumerate() {
            wav::write(out.file(&format!("clean_{k}.wav"))?, c)?;
        }
    }
    let mut frames = 0;
    if !a.no_frames {
        for (i, f) in metrics::mouth_frames(&clean, avse_core::T_CHUNK).iter().enumerate() {
            grid::write_frame_png(&out.file(&format!("frames/{i:05}.png"))?, f)?;
            frames += 1;
        }
    }
    if a.grids {
        let stft = StftConfig::default();
        let y = stft.analyze(&m.mixture)?;
        let mask = oracle_mask(&stft.analyze(&clean)?, &y)?;
        write_grid(&mut out, "spectrogram", &Grid::spectrogram_db(&y), a.png)?;
        write_grid(&mut out, "mask", &Grid::mask(&y, &mask), a.png)?;
    }
    println!(
        "scene seed {}: {:.2} s at {} Hz, {} target(s), {} noise track(s), {} frames",
        a.seed,
        m.mixture.duration(),
        m.mixture.sample_rate,
        m.clean_refs.len(),
        params.noises,
        frames
    );
    let mut extra = Table::new();
    extra.insert("scene".into(), Value::String("scene.toml".into()));
    out.finish("synth", Some(a.seed), extra)?;
    Ok(ExitCode::SUCCESS)
}

fn write_grid(out: &mut OutDir, name: &str, g: &Grid, png: bool) -> Result<()> {
    g.write_csv(&out.file(&format!("{name}.csv"))?)?;
    if png {
        g.write_png(&out.file(&format!("{name}.png"))?)?;
    }
    Ok(())
}

fn pipeline_config(a: &RunArgs) -> Result<PipelineConfig> {
    let mut t = settings::read_table(a.common.config.as_deref())?;
    settings::apply(&mut t, &a.common.overrides)?;
    if let Some(name) = &a.channel {
        let seed = t.get("channel").and_then(|c| c.get("seed")).cloned();
        let mut ch = Table::new();
        ch.insert("name".into(), Value::String(name.clone()));
        if let Some(seed) = seed {
            ch.insert("seed".into(), seed);
        }
        t.insert("channel".into(), Value::Table(ch));
    }
    if let Some(tier) = &a.tier {
        let spec = EnhancerSpec::tier(ModelTier::parse(tier)?);
        let v = Value::try_from(&spec).map_err(|e| Error::Config(e.to_string()))?;
        t.insert("enhancer".into(), v);
    }
    let f = |v: f64| Value::Float(v);
    let sets: [(&str, Option<Value>); 10] = [
        ("channel.seed", a.seed.map(|s| Value::Integer(s as i64))),
        ("payload.quality", a.quality.map(|q| Value::Integer(q.into()))),
        ("payload.video", a.no_video.then_some(Value::Boolean(false))),
        ("t_chunk", a.t_chunk.map(f)),
        ("t_i", a.t_i.map(f)),
        ("t_delta", a.t_delta.map(f)),
        ("enhancer.kind", a.enhancer.clone().map(Value::String)),
        ("enhancer.t_a", a.t_a.map(f)),
        ("addr", a.addr.clone().map(Value::String)),
        ("mode", match a.mode {
            Some(RunMode::Sim) => Some(Value::String("sim".into())),
            Some(_) => Some(Value::String("live".into())),
            None => None,
        }),
    ];
    for (k, v) in sets {
        if let Some(v) = v {
            settings::set(&mut t, k, v)?;
        }
    }
    let cfg: PipelineConfig = settings::resolve(t)?;
    Ok(pipeline::validate_config(cfg)?.config)
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let cfg = pipeline_config(&a)?;
    let mode = a.mode.unwrap_or(match cfg.mode {
        Mode::Sim => RunMode::Sim,
        Mode::Live => RunMode::Loopback,
    });
    let clean = a.clean.as_deref().map(wav::read).transpose()?;
    let mut out = OutDir::create(&a.common.out)?;
    out.write("config.toml", config::to_string(&cfg)?)?;
    let mut extra = Table::new();
    extra.insert("config".into(), Value::String("config.toml".into()));

    if let RunMode::LiveServer = mode {
        let listener = TcpListener::bind(&cfg.addr).map_err(Error::Socket)?;
        println!("listening on {}", listener.local_addr().map_err(Error::Socket)?);
        std::io::stdout().flush().map_err(Error::Socket)?;
        let sr = clean.as_ref().map_or(avse_core::SAMPLE_RATE, |c| c.sample_rate);
        let results = live::serve(&cfg, &listener, a.sessions, clean, sr)?;
        let mut protocol_errors = 0;
        let mut failed = 0;
        let mut text = String::new();
        for (i, r) in results.iter().enumerate() {
            match r {
                Ok(s) => {
                    protocol_errors += s.protocol_errors;
                    text += &format!("[[session]]\nindex = {i}\nchunks = {}\nprotocol_errors = {}\n\n", s.chunks, s.protocol_errors);
                }
                Err(e) => {
                    failed += 1;
                    text += &format!("[[session]]\nindex = {i}\nerror = {:?}\n\n", e.to_string());
                }
            }
        }
        out.write("sessions.toml", text)?;
        println!("served {} session(s), {} failed, {} protocol error(s)", results.len(), failed, protocol_errors);
        out.finish("run", Some(cfg.channel.seed), extra)?;
        return Ok(if protocol_errors > 0 || failed > 0 { ExitCode::from(3) } else { ExitCode::SUCCESS });
    }

    let source = match &a.input {
        Some(path) => MediaSource::new(wav::read(path)?, clean, &cfg)?,
        None => MediaSource::synthetic(a.duration, cfg.channel.seed, &cfg)?,
    };
    let output: RunOutput = match mode {
        RunMode::Sim => pipeline::simulate_with(&cfg, &source)?,
        RunMode::Loopback => live::run_loopback(&cfg, &source)?,
        RunMode::LiveClient => live::run_client(&cfg, &cfg.addr, &source)?,
        RunMode::LiveServer => unreachable!(),
    };
    for w in &output.warnings {
        log::warn!("{w}");
    }
    output.log.save_csv(out.file("events.csv")?)?;
    wav::write(out.file("played.wav")?, &output.played)?;
    let reference = source.clean.as_ref().map(|c| (c, &source.audio));
    let rep = metrics::report(&output, reference)?;
    write_report(&mut out, &rep)?;
    if a.grids {
        let spec = StftConfig::default().analyze(&output.played)?;
        write_grid(&mut out, "played_spectrogram", &Grid::spectrogram_db(&spec), a.png)?;
    }
    print_report(&rep);
    extra.insert("duration_s".into(), Value::Float(source.audio.duration()));
    if let Some(p) = &a.input {
        extra.insert("input".into(), Value::String(p.display().to_string()));
    }
    out.finish("run", Some(cfg.channel.seed), extra)?;
    if output.protocol_errors > 0 {
        eprintln!("error: {} protocol error(s) during the run", output.protocol_errors);
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report(out: &mut OutDir, rep: &RunReport) -> Result<()> {
    let json = serde_json::to_string_pretty(rep).map_err(|e| Error::InvalidInput(e.to_string()))?;
    out.write("report.json", json)
}

fn print_report(rep: &RunReport) {
    println!("chunks delivered: {} (dropped {})", rep.chunks.len(), rep.dropped);
    if let Some(d) = &rep.t_delay {
        println!("t_delay s: min {:.4} median {:.4} p95 {:.4} max {:.4}", d.min, d.median, d.p95, d.max);
    }
    if let Some(c) = &rep.t_comm {
        println!("t_comm s: median {:.4} p95 {:.4}", c.median, c.p95);
    }
    println!("gaps: {} totalling {:.3} s; coherent: {}", rep.gap_count, rep.gap_total, rep.coherent);
    if let Some(q) = &rep.quality {
        println!("snr dB: input {:.2} output {:.2} improvement {:.2}", q.input_snr, q.output_snr, q.improvement);
    }
    if rep.payload_bytes > 0.0 {
        println!("mean media message: {:.0} bytes", rep.payload_bytes);
    }
}

fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let kind = SweepKind::parse(&a.name)?;
    let strategy = if a.sequential { Strategy::Sequential } else { Strategy::default() };
    let table = metrics::sweep(kind, a.seed, strategy)?;
    let mut out = OutDir::create(&a.out)?;
    table.save_csv(out.file(&format!("{}.csv", a.name))?)?;
    let col = |name: &str| table.column(name).ok_or_else(|| Error::InvalidInput(format!("sweep has no {name} column")));
    let mut extra = Table::new();
    match kind {
        SweepKind::Networks => {
            let rtt = col("rtt_ms")?;
            let mut groups: Vec<(&str, Vec<f64>)> = Vec::new();
            for (row, v) in table.rows.iter().zip(rtt) {
                match groups.last_mut() {
                    Some((name, vs)) if *name == row[0] => vs.push(v),
                    _ => groups.push((&row[0], vec![v])),
                }
            }
            for (name, vs) in groups {
                println!("{name}: {} trials, median rtt {:.2} ms", vs.len(), avse_core::netem::median(&vs));
            }
        }
        SweepKind::Compression => {
            for row in &table.rows {
                println!("quality {}: {} bytes ({}x)", row[0], row[1], row[2]);
            }
        }
        SweepKind::ChunkSize => {
            let (slope, intercept, r2) = metrics::linear_fit(&col("frames")?, &col("latency_s")?)?;
            println!("latency = {slope:.6} s/frame * frames + {intercept:.6} s (r2 {r2:.6})");
            for (k, v) in [("slope_s_per_frame", slope), ("intercept_s", intercept), ("r2", r2)] {
                extra.insert(k.into(), Value::Float(v));
            }
        }
    }
    out.finish("sweep", Some(a.seed), extra)?;
    Ok(ExitCode::SUCCESS)
}

fn report(a: ReportArgs) -> Result<ExitCode> {
    let log = load_events(&a.events)?;
    let rep = metrics::report_log(&log, a.t_chunk)?;
    let mut out = OutDir::create(&a.out)?;
    write_report(&mut out, &rep)?;
    print_report(&rep);
    let mut extra = Table::new();
    extra.insert("events".into(), Value::String(a.events.display().to_string()));
    extra.insert("t_chunk".into(), Value::Float(a.t_chunk));
    out.finish("report", None, extra)?;
    Ok(ExitCode::SUCCESS)
}

fn load_events(path: &Path) -> Result<EventLog> {
    if !path.is_file() {
        return Err(io_err(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    EventLog::load_csv(path)
}
