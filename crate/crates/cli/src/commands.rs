use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::Value;
use wahls_core::benchmark::{
    evaluate_with, load_bundle, render_submission, EvalOptions, MetricsReport, PredictionFile, Predictor, R2,
};
use wahls_core::dataset::{load_dataset, load_dataset_detailed, Dataset, Split};
use wahls_core::exec::Exec;
use wahls_core::featurize::{layout_descriptor, FEATURE_LAYOUT_VERSION};
use wahls_core::stats::{bops_correlation, bops_scatter, write_scatter_csv};
use wahls_core::synth::{exemplar_dataset, generate_dataset_with, GenRanges};
use wahls_core::targets::Target;
use wahls_core::validate::validate_sample;
use wahls_surrogates::{train_with, write_checkpoint, TrainConfig};

use crate::cli::{
    Cli, Command, EstimateArgs, EvaluateArgs, GenerateArgs, Preset, ReportArgs, ServeArgs, StatsArgs, TrainArgs,
    ValidateArgs,
};
use crate::request::{load_model, request_value, LoadedModel, Registry};
use crate::server::{serve, AppState};
use crate::settings::FileSettings;
use crate::{CliError, CliResult};

pub fn dispatch(cli: Cli) -> CliResult {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let settings = FileSettings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => generate(a, exec),
        Command::Validate(a) => validate(a, exec),
        Command::Train(a) => train(a, &settings, exec),
        Command::Evaluate(a) => evaluate(a, exec),
        Command::Report(a) => report(a),
        Command::Estimate(a) => estimate(a),
        Command::Serve(a) => serve_cmd(a, &settings),
        Command::Stats(a) => stats(a),
        Command::DescribeFeatures => {
            println!("{}", serde_json::to_string_pretty(&layout_descriptor())?);
            Ok(())
        }
    }
}

fn generate(a: GenerateArgs, exec: Exec) -> CliResult {
    let ds = if a.exemplars {
        exemplar_dataset()
    } else {
        generate_dataset_with(a.seed, a.n, &a.mix, &GenRanges::default(), a.split, exec)
    };
    if a.out.extension().is_some_and(|e| e == "jsonl") {
        if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        ds.write_archive(&a.out)?;
    } else {
        ds.write_dir(&a.out)?;
    }
    println!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(())
}

fn validate(a: ValidateArgs, exec: Exec) -> CliResult {
    let loaded = load_dataset_detailed(&a.path, Split::Train, exec)?;
    let mut problems = loaded.failures.len();
    for f in &loaded.failures {
        println!("{}: parse error: {}", f.location, f.reason);
    }
    for s in loaded.dataset.iter() {
        let r = validate_sample(s);
        for v in &r.violations {
            problems += 1;
            println!("{}: {}", s.id(), serde_json::to_string(v)?);
        }
    }
    println!("{} samples loaded, {problems} problems", loaded.dataset.len());
    if problems > 0 {
        return Err(anyhow::anyhow!("{problems} problems in {}", a.path.display()).into());
    }
    Ok(())
}

fn holdout(ds: Dataset, fraction: f64) -> CliResult<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!("--val-fraction must be in (0, 1), got {fraction}")));
    }
    let n = ds.len();
    let n_val = ((n as f64 * fraction).round() as usize).max(1);
    if n_val >= n {
        return Err(anyhow::anyhow!("{n} samples are too few to hold out a validation set").into());
    }
    let s = ds.samples();
    Ok((
        Dataset::new(Split::Train, s[..n - n_val].to_vec())?,
        Dataset::new(Split::Validation, s[n - n_val..].to_vec())?,
    ))
}

fn train(a: TrainArgs, settings: &FileSettings, exec: Exec) -> CliResult {
    let mut cfg = match a.preset {
        Preset::Desk => TrainConfig::desk(a.model),
        Preset::Paper => TrainConfig::paper(a.model),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.optimizer.lr = lr;
    }
    cfg.check().map_err(|e| CliError::Usage(e.to_string()))?;

    let ds = load_dataset(&a.dataset, Split::Train)?;
    let (tr, va) = match &a.val {
        Some(p) => (ds, load_dataset(p, Split::Validation)?),
        None => holdout(ds, a.val_fraction)?,
    };
    tracing::info!(kind = %a.model, train = tr.len(), val = va.len(), epochs = cfg.epochs, "training");
    let model = train_with(a.model, &tr, &va, &cfg, exec)?;
    let path = match a.out {
        Some(p) => p,
        None => {
            let dir = settings.ckpt_dir(a.ckpt_dir);
            dir.join(format!("{}-{}.ckpt", model.kind(), &model.checkpoint_hash()[..12]))
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    write_checkpoint(&model, &path)?;
    if let Some(last) = model.history.last() {
        println!("final epoch {}: train loss {:.5}, val loss {:.5}", last.epoch, last.train_loss, last.val_loss);
    }
    println!("{}", path.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs, exec: Exec) -> CliResult {
    let ds = load_dataset(&a.dataset, a.split)?;
    let predictor: Box<dyn Predictor> = match (&a.model_ckpt, &a.predictions) {
        (Some(p), _) => Box::new(load_model(p)?),
        (None, Some(p)) => Box::new(PredictionFile::from_csv(p)?),
        (None, None) => unreachable!("clap requires one predictor"),
    };
    let opts = EvalOptions { groups: a.groups, record_timing: !a.no_timing, exec };
    let report = evaluate_with(predictor.as_ref(), &ds, &opts)?;
    render_submission(&report, &a.out)?;
    print_report(&report);
    println!("bundle written to {}", a.out.display());
    Ok(())
}

fn report(a: ReportArgs) -> CliResult {
    let dir: PathBuf = if a.metrics.is_file() {
        a.metrics.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        a.metrics.clone()
    };
    let report = load_bundle(&dir)?;
    print_report(&report);
    if let Some(out) = a.out {
        render_submission(&report, &out)?;
        println!("bundle written to {}", out.display());
    }
    Ok(())
}

fn fmt_r2(r: R2) -> String {
    match r {
        R2::Score(v) => format!("{v:>8.4}"),
        R2::Skipped => format!("{:>8}", "skipped"),
    }
}

fn print_report(r: &MetricsReport) {
    println!("predictor {} ({}), {} samples", r.predictor.name, r.predictor.kind, r.n_samples);
    if let Some(t) = &r.timing {
        println!("inference {:.3} ms/sample", t.per_sample_ms);
    }
    print!("{:<28} {:>6}", "group", "n");
    for t in Target::ALL {
        print!(" {:>8} {:>8}", format!("{}_r2", t.as_str()), format!("{}_sm", t.as_str()));
    }
    println!();
    for g in &r.groups {
        print!("{:<28} {:>6}", g.name, g.n);
        for c in &g.cells {
            print!(" {} {:>8.4}", fmt_r2(c.metrics.r2), c.metrics.smape);
        }
        println!();
    }
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn estimate(a: EstimateArgs) -> CliResult {
    let arch = match (&a.arch_file, &a.exemplar) {
        (Some(p), _) => read_json(p)?,
        (None, Some(name)) => Value::String(name.clone()),
        (None, None) => unreachable!("clap requires an architecture"),
    };
    let config = match &a.config_file {
        Some(p) => read_json(p)?,
        None => Value::Object(Default::default()),
    };
    let loaded = LoadedModel::new(load_model(&a.model_ckpt)?, Some(a.model_ckpt.clone()));
    let id = loaded.meta.id.clone();
    let registry = Registry::new(vec![loaded]);
    let resp = registry.estimate_value(&request_value(arch, config, Some(id))).map_err(anyhow::Error::from)?;
    println!("{}", serde_json::to_string_pretty(&resp)?);
    Ok(())
}

fn serve_cmd(a: ServeArgs, settings: &FileSettings) -> CliResult {
    let host = settings.host(a.host);
    let port = settings.port(a.port);
    let addr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address {host}:{port}: {e}")))?;
    let mut paths = settings.checkpoints.clone();
    paths.extend(a.ckpts);
    let dir = settings.ckpt_dir(a.ckpt_dir);
    let registry = Registry::load(&paths, Some(&dir))?;
    if registry.is_empty() {
        tracing::warn!(dir = %dir.display(), "no checkpoints loaded; estimates will return 404");
    }
    for m in registry.catalog() {
        tracing::info!(id = %m.meta.id, kind = %m.meta.kind, layout = FEATURE_LAYOUT_VERSION, "loaded");
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(AppState::new(registry), addr))?;
    Ok(())
}

fn stats(a: StatsArgs) -> CliResult {
    let ds = load_dataset(&a.dataset, Split::Train)?;
    let points = bops_scatter(&ds);
    print!("{:<8} {:>6}", "family", "n");
    for t in Target::ALL {
        print!(" {:>8}", t.as_str());
    }
    println!();
    for c in bops_correlation(&points) {
        print!("{:<8} {:>6}", format!("{:?}", c.family).to_lowercase(), c.n);
        for t in Target::ALL {
            match c.log_pearson.get(&t).copied().flatten() {
                Some(r) => print!(" {r:>8.3}"),
                None => print!(" {:>8}", "-"),
            }
        }
        println!();
    }
    if let Some(out) = a.out {
        let f = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
        write_scatter_csv(&points, f)?;
        println!("scatter written to {}", out.display());
    }
    Ok(())
}
