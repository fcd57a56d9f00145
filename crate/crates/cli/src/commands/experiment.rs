use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lpht_core::experiments::{
    fit_exponents, q_rows, run_alternative_experiment, run_null_experiment, run_q_experiment,
    run_sample_complexity_experiment, statistic_rows, with_threads, Evaluator, ExperimentConfig, PointRun,
    RejectionBand, SampleComplexityRow, Summary,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::manifest::{attach, emit, write_json, RunManifest};
use crate::{ExperimentArgs, EXIT_ACCEPT};

fn parse_stub(s: &str) -> Result<Evaluator> {
    if s == "zero" {
        return Ok(Evaluator::Zero);
    }
    if let Some(scale) = s.strip_prefix("linear:") {
        let scale: f64 = scale.parse().with_context(|| format!("bad stub scale `{scale}`"))?;
        return Ok(Evaluator::Linear { scale });
    }
    bail!("unknown stub `{s}` (expected `linear:<scale>` or `zero`)")
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Flags over config file over defaults.
pub fn resolve_config(args: &ExperimentArgs, evaluator: Evaluator) -> Result<ExperimentConfig> {
    let mut defaults = ExperimentConfig::for_experiment(args.id);
    if evaluator != Evaluator::PTest {
        defaults.band = RejectionBand::THIRD;
    }
    let mut value = serde_json::to_value(&defaults)?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let patch: Value = serde_json::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        if !patch.is_object() {
            bail!("config file must hold a JSON object");
        }
        merge(&mut value, patch);
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(value).context("invalid configuration")?;
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag.clone() {
                $field = v;
            }
        };
    }
    set!(args.trials, cfg.trials);
    set!(args.seed, cfg.seed);
    set!(args.domain, cfg.t);
    set!(args.n, cfg.n);
    set!(args.alpha, cfg.alpha);
    set!(args.epsilon, cfg.epsilon);
    set!(args.sweep_domain, cfg.sweeps.t);
    set!(args.sweep_n, cfg.sweeps.n);
    set!(args.sweep_alpha, cfg.sweeps.alpha);
    set!(args.sweep_epsilon, cfg.sweeps.epsilon);
    set!(args.features, cfg.features);
    set!(args.probe_trials, cfg.probe_trials);
    if let Some(b) = &args.band {
        cfg.band = RejectionBand {
            low: b[0],
            high: b[1],
            target: b[2],
        };
    }
    if let Some(m) = &args.mode {
        cfg.mode = serde_json::from_value(json!(m)).with_context(|| format!("unknown mode `{m}`"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn point_summaries(runs: &[PointRun]) -> Value {
    Value::Array(
        runs.iter()
            .map(|r| {
                json!({
                    "point": r.point,
                    "threshold": r.threshold,
                    "rejection_rate": r.rejection_rate(),
                    "P": r.summary(),
                })
            })
            .collect(),
    )
}

pub fn run(args: &ExperimentArgs) -> Result<u8> {
    let evaluator = match &args.stub {
        Some(s) if args.id == 3 => parse_stub(s)?,
        Some(_) => bail!("--stub applies to experiment 3 only"),
        None => Evaluator::PTest,
    };
    let cfg = resolve_config(args, evaluator)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path: PathBuf = args.out.join(format!("exp{}.csv", args.id));
    let summary_path: PathBuf = args.out.join(format!("exp{}.summary.json", args.id));

    let mut config = serde_json::to_value(&cfg)?;
    if args.id == 3 {
        config["evaluator"] = serde_json::to_value(evaluator)?;
    }
    let manifest = RunManifest::new(&format!("experiment {}", args.id), config, Some(cfg.seed))
        .output(&csv_path)
        .output(&summary_path);

    let id = args.id;
    let mut summary = Map::new();
    with_threads(args.threads, || -> Result<()> {
        match id {
            1 | 2 => {
                let runs = if id == 1 {
                    run_null_experiment(&cfg)?
                } else {
                    run_alternative_experiment(&cfg)?
                };
                write_csv(&csv_path, &statistic_rows(&runs))?;
                summary.insert("points".into(), point_summaries(&runs));
            }
            3 => {
                let results = run_sample_complexity_experiment(&cfg, evaluator)?;
                let rows: Vec<SampleComplexityRow> = results.iter().map(Into::into).collect();
                write_csv(&csv_path, &rows)?;
                summary.insert("results".into(), serde_json::to_value(&results)?);
                summary.insert("exponents".into(), serde_json::to_value(fit_exponents(&results))?);
            }
            _ => {
                let run = run_q_experiment(&cfg)?;
                write_csv(&csv_path, &q_rows(&run))?;
                summary.insert("null".into(), serde_json::to_value(Summary::of(&run.null))?);
                summary.insert("alternative".into(), serde_json::to_value(Summary::of(&run.alternative))?);
                summary.insert("excluded".into(), json!(run.excluded));
            }
        }
        Ok(())
    })??;

    manifest.write_sidecar(&csv_path)?;
    let value = attach(
        json!({"experiment": id, "config": cfg, "seed": cfg.seed, "summary": summary}),
        &manifest,
    );
    write_json(&summary_path, &value)?;
    emit(&value)?;
    Ok(EXIT_ACCEPT)
}
