use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ecg_unc_core::data::{
    generate, load_dataset, save_dataset, write_manifest_csv, write_truth_csv, DataError, SynthConfig, CLASS_COUNT,
    CLASS_NAMES,
};
use ecg_unc_core::evaluate::{evaluate_mc, RecordResult};
use ecg_unc_core::metrics::confusion;
use ecg_unc_core::net::{load_checkpoint, save_checkpoint, CheckpointError, Network, NetworkConfig};
use ecg_unc_core::rejection::{decide, sweep, UncertaintyKind};
use ecg_unc_core::report::UncertaintyReport;
use ecg_unc_core::seed::{rng_for, stream};
use ecg_unc_core::train::{split_dataset, train, SplitSpec, TrainConfig, TrainError};
use ecg_unc_core::uncertainty::UncertaintyError;
use serde_json::json;

use crate::args::{Command, EvaluateArgs, GenDataArgs, NetScale, ReplayArgs, SweepArgs, TrainArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{absolute, sibling, Artifact, RunManifest, MANIFEST_FILE};
use crate::svg;
use crate::tables::{read_uncertainty, write_confusion, write_sweep, write_uncertainty, UNCERTAINTY_FILE};

/// Runs one command and returns the manifest it wrote (none for `replay`).
pub fn execute(command: Command) -> CliResult<Option<RunManifest>> {
    match command {
        Command::GenData(a) => gen_data(a).map(Some),
        Command::Train(a) => train_cmd(a).map(Some),
        Command::Evaluate(a) => evaluate(a).map(Some),
        Command::Sweep(a) => sweep_cmd(a).map(Some),
        Command::Replay(a) => replay(a).map(|_| None),
    }
}

fn data_error(path: &Path) -> impl FnOnce(DataError) -> CliError + '_ {
    move |e| match e {
        DataError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::input(path)(other),
    }
}

fn checkpoint_error(path: &Path) -> impl FnOnce(CheckpointError) -> CliError + '_ {
    move |e| match e {
        CheckpointError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::input(path)(other),
    }
}

fn csv_error(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Input {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(path))
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => ensure_dir(parent),
        _ => Ok(()),
    }
}

fn gen_data(mut args: GenDataArgs) -> CliResult<RunManifest> {
    args.out = absolute(&args.out)?;
    args.config = args.config.as_deref().map(absolute).transpose()?;
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            serde_json::from_str(&text).map_err(CliError::input(path))?
        }
        None => SynthConfig {
            records_per_class: 10,
            ..SynthConfig::default()
        },
    };
    if let Some(n) = args.records_per_class {
        config.records_per_class = n;
    }
    if let Some(f) = args.hard_fraction {
        config.hard_fraction = f;
    }
    if let Some(f) = args.label_flip_fraction {
        config.label_flip_fraction = f;
    }
    if let Some(d) = args.min_duration {
        config.duration_secs.0 = d;
    }
    if let Some(d) = args.max_duration {
        config.duration_secs.1 = d;
    }
    config.seed = args.seed;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let synth = generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    ensure_parent(&args.out)?;
    save_dataset(&synth.dataset, &args.out).map_err(data_error(&args.out))?;
    let truth_path = sibling(&args.out, ".truth.csv");
    write_truth_csv(&synth.truth, create(&truth_path)?).map_err(data_error(&truth_path))?;
    let records_path = sibling(&args.out, ".records.csv");
    write_manifest_csv(&synth.dataset, create(&records_path)?).map_err(data_error(&records_path))?;

    let mut histogram = [0usize; CLASS_COUNT];
    for label in synth.dataset.labels() {
        histogram[label] += 1;
    }
    println!("wrote {} records to {}", synth.dataset.len(), args.out.display());
    for (name, count) in CLASS_NAMES.iter().zip(histogram) {
        println!("  {name:<7} {count}");
    }

    let mut manifest = RunManifest::new(
        Command::GenData(args.clone()),
        args.seed,
        serde_json::to_value(&config).expect("config serializes"),
    );
    if let Some(path) = &args.config {
        manifest.add_input("config", path)?;
    }
    manifest.add_output("dataset", &args.out)?;
    manifest.add_output("truth", &truth_path)?;
    manifest.add_output("records", &records_path)?;
    manifest.save(&sibling(&args.out, ".manifest.json"))?;
    Ok(manifest)
}

fn network_config(scale: NetScale) -> NetworkConfig {
    match scale {
        NetScale::Desk => NetworkConfig::desk(),
        NetScale::Paper => NetworkConfig::paper(),
    }
}

fn train_error(data: &Path) -> impl FnOnce(TrainError) -> CliError + '_ {
    move |e| match e {
        TrainError::NonFiniteLoss { .. } | TrainError::Network(_) | TrainError::Autodiff(_) => {
            CliError::Numeric(format!("training aborted: {e}"))
        }
        TrainError::LeadMismatch { .. } | TrainError::LabelOutOfRange { .. } => CliError::input(data)(e),
        other => CliError::Usage(other.to_string()),
    }
}

fn train_cmd(mut args: TrainArgs) -> CliResult<RunManifest> {
    args.data = absolute(&args.data)?;
    args.out = absolute(&args.out)?;
    let dataset = load_dataset(&args.data).map_err(data_error(&args.data))?;
    let net_config = network_config(args.net_scale);
    let mut config = match args.net_scale {
        NetScale::Desk => TrainConfig::desk(),
        NetScale::Paper => TrainConfig::paper(),
    };
    config.batch_size = args.batch_size.unwrap_or(config.batch_size);
    config.lr_init = args.lr.unwrap_or(config.lr_init);
    config.plateau_factor = args.plateau_factor.unwrap_or(config.plateau_factor);
    config.plateau_patience_steps = args.patience_steps.unwrap_or(config.plateau_patience_steps);
    config.weight_decay = args.weight_decay.unwrap_or(config.weight_decay);
    config.max_steps = args.max_steps.unwrap_or(config.max_steps);
    config.eval_every = args.eval_every.unwrap_or(config.eval_every);
    config.seed = args.seed;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let spec = SplitSpec::default();
    let split = split_dataset(dataset.len(), spec, args.split_seed).map_err(train_error(&args.data))?;
    let train_set = dataset.subset(&split.train);
    let val_set = dataset.subset(&split.validation);
    let net = Network::build(net_config.clone(), &mut rng_for(args.seed, stream::INIT))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "training {} parameters on {} records ({} validation), {} steps",
        net.parameter_count(),
        train_set.len(),
        val_set.len(),
        config.max_steps
    );
    let outcome = train(net, &train_set, &val_set, &config).map_err(train_error(&args.data))?;

    ensure_parent(&args.out)?;
    save_checkpoint(&outcome.network, &args.out).map_err(checkpoint_error(&args.out))?;
    let history_path = sibling(&args.out, ".history.csv");
    let mut history_file = create(&history_path)?;
    outcome.history.write_csv(&mut history_file).map_err(|e| CliError::Io {
        path: history_path.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;
    drop(history_file);
    println!(
        "best validation Macro-F1 {:.4} at step {}",
        outcome.best_val_macro_f1, outcome.best_step
    );

    let snapshot = json!({
        "network": net_config,
        "train": config,
        "split": { "seed": args.split_seed, "validation": spec.validation, "test": spec.test },
    });
    let mut manifest = RunManifest::new(Command::Train(args.clone()), args.seed, snapshot);
    manifest.add_input("data", &args.data)?;
    manifest.add_output("checkpoint", &args.out)?;
    manifest.add_output("history", &history_path)?;
    manifest.save(&sibling(&args.out, ".manifest.json"))?;
    Ok(manifest)
}

fn uncertainty_error(e: UncertaintyError) -> CliError {
    CliError::Numeric(format!("evaluation failed: {e}"))
}

fn evaluate(mut args: EvaluateArgs) -> CliResult<RunManifest> {
    args.data = absolute(&args.data)?;
    args.ckpt = absolute(&args.ckpt)?;
    args.out = absolute(&args.out)?;
    if args.n_mc == 0 {
        return Err(CliError::Usage("--n-mc must be at least 1".into()));
    }
    let dataset = load_dataset(&args.data).map_err(data_error(&args.data))?;
    let net = load_checkpoint(&args.ckpt).map_err(checkpoint_error(&args.ckpt))?;
    if let Some(scale) = args.net_scale {
        if net.config() != &network_config(scale) {
            return Err(CliError::Usage(format!(
                "checkpoint/config mismatch: {} was not built with --net-scale {scale:?}",
                args.ckpt.display()
            )));
        }
    }
    let cfg = net.config();
    if let Some(r) = dataset.records.iter().find(|r| r.lead_count() != cfg.input_leads) {
        return Err(CliError::Usage(format!(
            "checkpoint/config mismatch: record {} has {} leads, checkpoint expects {}",
            r.id,
            r.lead_count(),
            cfg.input_leads
        )));
    }
    if let Some(r) = dataset.records.iter().find(|r| r.label as usize >= cfg.num_classes) {
        return Err(CliError::Usage(format!(
            "checkpoint/config mismatch: record {} has label {}, checkpoint has {} classes",
            r.id, r.label, cfg.num_classes
        )));
    }
    let split = split_dataset(dataset.len(), SplitSpec::default(), args.split_seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let test = dataset.subset(&split.test);
    let results = evaluate_mc(&net, &test, args.n_mc, args.seed).map_err(uncertainty_error)?;

    ensure_dir(&args.out)?;
    let names = &CLASS_NAMES[..cfg.num_classes.min(CLASS_NAMES.len())];
    let mut written = Vec::new();
    let path = args.out.join(UNCERTAINTY_FILE);
    write_uncertainty(&results, create(&path)?).map_err(csv_error(&path))?;
    written.push(path);

    let truth: Vec<usize> = results.iter().map(|r| r.true_label).collect();
    let predicted: Vec<usize> = results.iter().map(|r| r.predicted).collect();
    let cm = confusion(&truth, &predicted, cfg.num_classes).map_err(|e| CliError::Numeric(e.to_string()))?;
    let path = args.out.join("confusion.csv");
    write_confusion(&cm, names, create(&path)?).map_err(csv_error(&path))?;
    written.push(path);
    let path = args.out.join("confusion.svg");
    write_text(
        &path,
        &svg::confusion_heatmap(&cm, names, "Confusion matrix, no rejection"),
    )?;
    written.push(path);

    let report = UncertaintyReport::build(&results, names).map_err(|e| CliError::Numeric(e.to_string()))?;
    let path = args.out.join("stats_report.csv");
    report.write_csv(create(&path)?).map_err(csv_error(&path))?;
    written.push(path);
    let path = args.out.join("stats_report.txt");
    write_text(&path, &report.to_text())?;
    written.push(path);

    for (file, label, pick) in [
        (
            "hist_total.svg",
            "total uncertainty",
            (|r: &RecordResult| r.estimate.total) as fn(&RecordResult) -> f64,
        ),
        ("hist_data.svg", "data uncertainty", |r| r.estimate.data),
        ("hist_model.svg", "model uncertainty", |r| r.estimate.model),
    ] {
        let correct: Vec<f64> = results.iter().filter(|r| r.is_correct()).map(pick).collect();
        let wrong: Vec<f64> = results.iter().filter(|r| !r.is_correct()).map(pick).collect();
        let path = args.out.join(file);
        let title = format!("Distribution of {label}");
        write_text(
            &path,
            &svg::histogram(
                &title,
                label,
                &[("correct", &correct, "seagreen"), ("wrong", &wrong, "crimson")],
                20,
            ),
        )?;
        written.push(path);
    }
    let model: Vec<f64> = results.iter().map(|r| r.estimate.model).collect();
    let data: Vec<f64> = results.iter().map(|r| r.estimate.data).collect();
    let path = args.out.join("model_vs_data.svg");
    write_text(
        &path,
        &svg::scatter(
            "Model vs data uncertainty",
            &model,
            &data,
            "model uncertainty",
            "data uncertainty",
        ),
    )?;
    written.push(path);

    print!("{}", report.to_text());
    println!("test records {}, Macro-F1 {:.4}", results.len(), cm.macro_f1());

    let snapshot = json!({
        "network": cfg,
        "n_mc": args.n_mc,
        "split": { "seed": args.split_seed },
    });
    let mut manifest = RunManifest::new(Command::Evaluate(args.clone()), args.seed, snapshot);
    manifest.add_input("data", &args.data)?;
    manifest.add_input("checkpoint", &args.ckpt)?;
    for path in &written {
        manifest.add_output(&file_name(path), path)?;
    }
    manifest.save(&args.out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn sweep_cmd(mut args: SweepArgs) -> CliResult<RunManifest> {
    args.eval_dir = absolute(&args.eval_dir)?;
    args.out = absolute(&args.out)?;
    if !(args.threshold >= 0.0) {
        return Err(CliError::Usage(format!(
            "--threshold {} must be non-negative",
            args.threshold
        )));
    }
    let input = args.eval_dir.join(UNCERTAINTY_FILE);
    let file = File::open(&input).map_err(CliError::io(&input))?;
    let results = read_uncertainty(file).map_err(csv_error(&input))?;
    if results.is_empty() {
        return Err(CliError::Input {
            path: input,
            message: "no records to sweep".into(),
        });
    }
    if let Some(r) = results
        .iter()
        .find(|r| r.true_label >= CLASS_COUNT || r.predicted >= CLASS_COUNT)
    {
        return Err(CliError::Input {
            path: input,
            message: format!("record {} has a label outside 0..{CLASS_COUNT}", r.id),
        });
    }
    let thresholds = args.grid.points();
    if thresholds.is_empty() {
        return Err(CliError::Usage(format!("grid {} is empty", args.grid)));
    }
    let scored: Vec<_> = results.iter().map(RecordResult::scored).collect();
    let points = sweep(&scored, &thresholds, CLASS_COUNT, args.kind).map_err(|e| CliError::Usage(e.to_string()))?;

    ensure_dir(&args.out)?;
    let names = &CLASS_NAMES[..];
    let mut written = Vec::new();
    let path = args.out.join("sweep.csv");
    write_sweep(&points, names, create(&path)?).map_err(csv_error(&path))?;
    written.push(path);
    let path = args.out.join("sweep.svg");
    write_text(&path, &svg::sweep_chart(&points))?;
    written.push(path);

    let (mut accepted, mut rejected) = (Vec::new(), Vec::new());
    for r in &results {
        let outcome =
            decide(&r.estimate, args.threshold, r.predicted, args.kind).map_err(|e| CliError::Usage(e.to_string()))?;
        if outcome.is_accepted() {
            accepted.push(r);
        } else {
            rejected.push(r);
        }
    }
    for (side, group) in [("accepted", &accepted), ("rejected", &rejected)] {
        let truth: Vec<usize> = group.iter().map(|r| r.true_label).collect();
        let predicted: Vec<usize> = group.iter().map(|r| r.predicted).collect();
        let cm = confusion(&truth, &predicted, CLASS_COUNT).map_err(|e| CliError::Numeric(e.to_string()))?;
        let path = args.out.join(format!("confusion_{side}.csv"));
        write_confusion(&cm, names, create(&path)?).map_err(csv_error(&path))?;
        written.push(path);
        let path = args.out.join(format!("confusion_{side}.svg"));
        let title = format!("{side} records at threshold {} ({})", args.threshold, group.len());
        write_text(&path, &svg::confusion_heatmap(&cm, names, &title))?;
        written.push(path);
    }

    let kind = match args.kind {
        UncertaintyKind::Total => "total",
        UncertaintyKind::Data => "data",
    };
    println!("{kind} uncertainty sweep over {} records", results.len());
    println!("threshold  accepted  accept_ratio  macro_f1");
    for p in &points {
        let f1 = p.macro_f1.map_or_else(|| "-".to_string(), |f| format!("{f:.4}"));
        println!(
            "{:>9.3}  {:>8}  {:>12.4}  {f1:>8}",
            p.threshold, p.accepted, p.accept_ratio
        );
    }

    let snapshot = json!({
        "grid": args.grid.to_string(),
        "thresholds": thresholds.len(),
        "kind": kind,
        "threshold": args.threshold,
    });
    let mut manifest = RunManifest::new(Command::Sweep(args.clone()), 0, snapshot);
    manifest.add_input("uncertainty", &input)?;
    for path in &written {
        manifest.add_output(&file_name(path), path)?;
    }
    manifest.save(&args.out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn with_output(command: Command, out: PathBuf) -> CliResult<Command> {
    Ok(match command {
        Command::GenData(a) => Command::GenData(GenDataArgs { out, ..a }),
        Command::Train(a) => Command::Train(TrainArgs { out, ..a }),
        Command::Evaluate(a) => Command::Evaluate(EvaluateArgs { out, ..a }),
        Command::Sweep(a) => Command::Sweep(SweepArgs { out, ..a }),
        Command::Replay(_) => return Err(CliError::Usage("a replay manifest cannot be replayed".into())),
    })
}

fn replay(args: ReplayArgs) -> CliResult<()> {
    let recorded = RunManifest::load(&args.manifest)?;
    for (role, artifact) in &recorded.inputs {
        let now = Artifact::hash(&artifact.path)?;
        if now.sha256 != artifact.sha256 {
            return Err(CliError::Input {
                path: artifact.path.clone(),
                message: format!("{role} input changed since the recorded run"),
            });
        }
    }
    let command = with_output(recorded.invocation.clone(), absolute(&args.out)?)?;
    println!("replaying {}", command.name());
    let fresh = execute(command)?.expect("non-replay commands return a manifest");
    let mut differing = 0;
    for (role, artifact) in &recorded.outputs {
        let status = match fresh.outputs.get(role) {
            Some(new) if new.sha256 == artifact.sha256 => "identical",
            Some(_) => "DIFFERS",
            None => "MISSING",
        };
        if status != "identical" {
            differing += 1;
        }
        println!("  {role:<24} {status}");
    }
    if differing > 0 {
        return Err(CliError::Numeric(format!(
            "replay reproduced {differing} artifact(s) differently"
        )));
    }
    println!("all {} artifacts reproduced byte-identically", recorded.outputs.len());
    Ok(())
}
