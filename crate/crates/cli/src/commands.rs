use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use propfault::config::RunConfig;
use propfault::eval::{build_report, emit_report, run_lofo, Method};
use propfault::features::{FeatureSchema, FeatureSet};
use propfault::ingest::{load_flight_csv, ColumnMap, FlightRecord, IngestConfig, Manifest};
use propfault::monitor::{DetectOptions, DetectorModel, PosteriorArtifact};
use propfault::persist;
use propfault::rng::derive_seed;
use propfault::sbi::{
    build_training_pairs, calibration_report, posterior_query, split_by_flight, train_posterior, PairConfig, PosteriorSummary,
};
use propfault::synth::{generate_corpus, write_corpus};
use propfault::{Error, Result};

use crate::{Cli, Command, DataArgs, FlightArgs};

/// Flags win over the config file, which wins over built-in defaults.
fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

fn apply_data_args(cfg: &mut RunConfig, data: &DataArgs) {
    if let Some(m) = &data.manifest {
        cfg.data.manifest = Some(m.clone());
    }
    if let Some(w) = data.window {
        cfg.features.window_length = w;
    }
    if let Some(s) = data.stride {
        cfg.features.stride = s;
    }
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn ingest_config(cfg: &RunConfig) -> IngestConfig {
    IngestConfig {
        window_length: cfg.features.window_length,
        stride: cfg.features.stride,
        sample_rate_hz: cfg.data.sample_rate_hz,
    }
}

fn load_flights(cfg: &RunConfig) -> Result<Vec<FlightRecord>> {
    match &cfg.data.manifest {
        Some(path) => Manifest::load(path)?.load_flights(&ingest_config(cfg)),
        None => {
            info!("no manifest given; generating the synthetic corpus");
            generate_corpus(&cfg.synth)
        }
    }
}

fn load_features(cfg: &RunConfig, data: &DataArgs) -> Result<FeatureSet> {
    if let Some(path) = &data.features {
        let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        return FeatureSet::read_csv(BufReader::new(file), &FeatureSchema::default());
    }
    let flights = load_flights(cfg)?;
    let fs = FeatureSet::extract(&flights, cfg.features.window_length, cfg.features.stride)?;
    info!("{} flights, {} windows", flights.len(), fs.len());
    Ok(fs)
}

fn load_single_flight(args: &FlightArgs, window_length: usize, stride: usize) -> Result<FeatureSet> {
    let columns = ColumnMap::preset(&args.columns)?;
    let ingest = IngestConfig { window_length, stride, sample_rate_hz: args.sample_rate };
    let flight = load_flight_csv(&args.flight, &columns, &ingest)
        .map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", args.flight.display())),
            other => other,
        })?;
    FeatureSet::extract(&[flight], window_length, stride)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct WithConfig<'a, T: Serialize> {
    config: serde_json::Value,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct WindowPosterior {
    start_index: usize,
    #[serde(flatten)]
    summary: PosteriorSummary,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Synth { out, flights, motors, severity, duration } => {
            let spec = &mut cfg.synth;
            if let Some(m) = motors {
                spec.motors = *m;
            }
            if let Some(s) = severity {
                spec.severities = s.clone();
            }
            if let Some(d) = duration {
                spec.duration_s = *d;
            }
            if let Some(n) = flights {
                let groups = spec.severities.len() + 1;
                let per = n / groups;
                if per == 0 {
                    return Err(Error::Config(format!("{n} flights cannot cover {groups} label classes")));
                }
                spec.n_fault_per_severity = per;
                spec.n_healthy = n - per * spec.severities.len();
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let records = generate_corpus(&cfg.synth)?;
            let manifest = write_corpus(&records, out)?;
            println!("wrote {} flights and manifest.csv to {}", manifest.entries.len(), out.display());
        }
        Command::Extract { data, out } => {
            apply_data_args(&mut cfg, data);
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let fs = load_features(&cfg, data)?;
            fs.write_csv(BufWriter::new(File::create(out)?))?;
            println!("wrote {} windows to {}", fs.len(), out.display());
        }
        Command::Fit { data, out, alpha_ema, far_target } => {
            apply_data_args(&mut cfg, data);
            if let Some(a) = alpha_ema {
                cfg.detector.alpha_ema = *a;
            }
            if let Some(f) = far_target {
                cfg.detector.far_target = *f;
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let fs = load_features(&cfg, data)?;
            let model = DetectorModel::fit(
                &fs,
                cfg.features.window_length,
                cfg.features.stride,
                cfg.detector.alpha_ema,
                cfg.detector.far_target,
            )?;
            persist::save(&model, out)?;
            println!(
                "fitted {} alternatives on {} windows; alarm threshold {:.4} at {:.0}% FAR",
                model.bank.motors(),
                fs.len(),
                model.threshold,
                100.0 * model.far_target
            );
        }
        Command::Cls { model, out, n_toys } => {
            if let Some(n) = n_toys {
                cfg.cls.n_toys = *n;
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let mut m: DetectorModel = persist::load(model)?;
            m.attach_ensemble(cfg.cls.n_toys, cfg.cls.seed)?;
            let target = out.as_ref().unwrap_or(model);
            persist::save(&m, target)?;
            println!("attached {} toys to {}", cfg.cls.n_toys, target.display());
        }
        Command::Detect { model, flight, posterior, alpha_det, no_cls, out } => {
            if let Some(a) = alpha_det {
                cfg.cls.alpha_det = *a;
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let m: DetectorModel = persist::load(model)?;
            let post: Option<PosteriorArtifact> = posterior.as_deref().map(persist::load).transpose()?;
            let fs = load_single_flight(flight, m.window_length, m.stride)?;
            let opts = DetectOptions {
                decision_threshold: cfg.detector.decision_threshold,
                alpha_det: (!no_cls).then_some(cfg.cls.alpha_det),
                cls_on_smoothed: cfg.cls.on_smoothed,
                n_samples: cfg.sbi.n_samples,
                level: cfg.sbi.level,
                seed: cfg.seed,
            };
            let report = m.detect(&fs, &opts, post.as_ref())?;
            write_json(&WithConfig { config: serde_json::to_value(&opts)?, body: &report }, out.as_deref())?;
            if out.is_some() {
                println!(
                    "{}: fault_declared={} alarm_fraction={:.3}",
                    report.flight_id, report.decision.fault_declared, report.alarm_fraction
                );
            }
        }
        Command::SbiTrain { data, out, calibration, epochs, in_sample } => {
            apply_data_args(&mut cfg, data);
            if let Some(e) = epochs {
                cfg.sbi.mdn.epochs = *e;
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let fs = load_features(&cfg, data)?;
            let (train, held) =
                if *in_sample { (fs.clone(), fs.clone()) } else { split_by_flight(&fs, cfg.sbi.holdout_fraction, cfg.seed)? };
            let pairs = build_training_pairs(&train, &cfg.sbi.pairs)?;
            info!("training on {} pairs from {} windows", pairs.len(), train.len());
            let model = train_posterior(&pairs, &cfg.sbi.pairs, &cfg.sbi.mdn)?;
            let held_pairs = build_training_pairs(&held, &PairConfig::exact())?;
            let report = calibration_report(&model, &held_pairs, &[0.5, cfg.sbi.level], cfg.sbi.n_samples, cfg.seed)?;
            persist::save(&PosteriorArtifact { schema: fs.schema.clone(), model }, out)?;
            let calibration = calibration.clone().unwrap_or_else(|| out.with_extension("calibration.json"));
            write_json(&WithConfig { config: serde_json::to_value(&cfg.sbi)?, body: &report }, Some(&calibration))?;
            for row in &report.coverage {
                println!("coverage at {:.2}: {:.3} over {} windows", row.level, row.coverage, row.n);
            }
            println!("severity MAE {:.4}", report.sev_mae);
        }
        Command::SbiInfer { posterior, flight, n_samples, level, out } => {
            if let Some(n) = n_samples {
                cfg.sbi.n_samples = *n;
            }
            if let Some(l) = level {
                cfg.sbi.level = *l;
            }
            cfg.validate()?;
            let post: PosteriorArtifact = persist::load(posterior)?;
            let fs = load_single_flight(flight, cfg.features.window_length, cfg.features.stride)?;
            persist::check_schema(&post.schema, &fs.schema)?;
            let rows = fs
                .rows
                .iter()
                .map(|r| {
                    let seed = derive_seed(cfg.seed, r.start_index as u64);
                    let p = posterior_query(&post.model, &r.values, cfg.sbi.n_samples, cfg.sbi.level, seed)?;
                    Ok(WindowPosterior { start_index: r.start_index, summary: p.summary(seed) })
                })
                .collect::<Result<Vec<_>>>()?;
            #[derive(Serialize)]
            struct Body<'a> {
                flight_id: &'a str,
                windows: Vec<WindowPosterior>,
            }
            let id = fs.flight_ids().into_iter().next().unwrap_or_default();
            let body = Body { flight_id: &id, windows: rows };
            let echo = serde_json::json!({ "n_samples": cfg.sbi.n_samples, "level": cfg.sbi.level, "seed": cfg.seed });
            write_json(&WithConfig { config: echo, body: &body }, out.as_deref())?;
        }
        Command::EvalLofo { data, methods, out, n_boot } => {
            apply_data_args(&mut cfg, data);
            if let Some(m) = methods {
                cfg.eval.methods = Method::parse_list(m)?;
            }
            if let Some(n) = n_boot {
                cfg.report.n_boot = *n;
            }
            if let Some(o) = out {
                cfg.output_dir = o.clone();
            }
            cfg.validate()?;
            init_threads(cfg.threads)?;
            let fs = load_features(&cfg, data)?;
            let folds = run_lofo(&fs, &cfg.eval)?;
            let report = build_report(&folds, &fs, serde_json::to_value(&cfg)?, &cfg.report)?;
            emit_report(&report, &folds, &cfg.output_dir)?;
            print!("{}", report.summary_table());
            println!("report written to {}", PathBuf::from(&cfg.output_dir).join("report.json").display());
        }
    }
    Ok(())
}
