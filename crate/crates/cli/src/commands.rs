use std::fmt::Write as _;
use std::path::Path;

use elastokit::chem::{morgan_fingerprint, parse_smiles};
use elastokit::config::{resolve_seeds, RunConfig};
use elastokit::dataset::{load_dataset, DatasetTable, Severity};
use elastokit::embedding::{format_value, write_embedding_table, EmbeddingTable};
use elastokit::error::{Error, Result};
use elastokit::eval::{
    read_report_inputs, render_report, run_experiment, train_final_model, write_run_outputs,
    ExperimentOptions,
};
use elastokit::gin::{
    load_checkpoint, pretrain, read_corpus, save_checkpoint, GinConfig, GinModel, PretrainOptions,
};

use crate::{Command, EvaluateArgs, PredictArgs, PretrainArgs, RunArgs};

pub const SEED_ENV: &str = "ELASTOKIT_SEED";

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::ValidateData { dataset } => validate_data(&dataset),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::EmbedGraph {
            dataset,
            checkpoint,
            out,
        } => embed_graph(&dataset, &checkpoint, &out),
        Command::Fingerprint {
            dataset,
            radius,
            nbits,
            out,
        } => fingerprint(&dataset, radius, nbits, &out),
        Command::Evaluate(args) => evaluate(args),
        Command::Predict(args) => predict(args),
        Command::Report {
            metrics,
            predictions,
            dataset,
            out,
        } => report(&metrics, &predictions, &dataset, &out),
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV)
        .ok()
        .filter(|s| !s.trim().is_empty())
}

fn validate_data(path: &Path) -> Result<u8> {
    let table = load_dataset(path)?;
    let report = table.validate();
    print!("{report}");
    let valid = table.valid_subset(&report);
    let errors = report.rejected_ids().len();
    println!(
        "{} records, {} valid, {} rejected",
        table.len(),
        valid.len(),
        errors
    );
    if !valid.is_empty() {
        let s = valid.stats()?;
        let f = s.fraction_k_below(20.0);
        println!(
            "k: min {} median {} max {}; k < 20: {}/{}",
            format_value(s.k.min),
            format_value(s.k.median),
            format_value(s.k.max),
            f.numerator,
            f.denominator
        );
        println!(
            "E_MPa: min {} median {} max {}",
            format_value(s.e_mpa.min),
            format_value(s.e_mpa.median),
            format_value(s.e_mpa.max)
        );
    }
    Ok(if report.has_errors() { 1 } else { 0 })
}

fn cmd_pretrain(args: PretrainArgs) -> Result<u8> {
    let seed = match args.seed {
        Some(s) => s,
        None => resolve_seeds(&[], env_seed().as_deref())?[0],
    };
    let config = GinConfig {
        hidden_dim: args.hidden_dim,
        num_layers: args.layers,
        mask_ratio: args.mask_ratio,
        seed,
    };
    let corpus = read_corpus(&args.corpus)?;
    let mut model = GinModel::new(config)?;
    let opts = PretrainOptions {
        lr: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed,
    };
    let report = pretrain(&mut model, &corpus, &opts)?;
    save_checkpoint(&model, &args.out)?;
    if let Some(path) = &args.loss_csv {
        let mut csv = String::from("epoch,total,atom,bond\n");
        for (i, l) in report.epochs.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{i},{},{},{}",
                format_value(l.total),
                format_value(l.atom_loss),
                format_value(l.bond_loss)
            );
        }
        std::fs::write(path, csv).map_err(|e| io_error(path, e))?;
    }
    let first = report.epochs.first().map_or(f64::NAN, |l| l.total);
    let last = report.epochs.last().map_or(f64::NAN, |l| l.total);
    println!(
        "pretrained on {} graphs: loss {} -> {}; wrote {}",
        corpus.len(),
        format_value(first),
        format_value(last),
        args.out.display()
    );
    Ok(0)
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Valid records; rejected ones are reported on stderr.
fn valid_records(path: &Path) -> Result<DatasetTable> {
    let table = load_dataset(path)?;
    let report = table.validate();
    for issue in &report.issues {
        match issue.severity {
            Severity::Error => {
                eprintln!("warning: skipping {}: {}", issue.record_id, issue.message)
            }
            Severity::Warning => eprintln!("warning: {}: {}", issue.record_id, issue.message),
        }
    }
    Ok(table.valid_subset(&report))
}

fn embed_graph(dataset: &Path, checkpoint: &Path, out: &Path) -> Result<u8> {
    let records = valid_records(dataset)?;
    let model = load_checkpoint(checkpoint)?;
    let mut table = EmbeddingTable::new(model.hidden_dim(), "gin")?;
    for r in &records.records {
        table.insert(r.id.clone(), model.encode(&parse_smiles(&r.smiles)?)?)?;
    }
    write_embedding_table(&table, out)?;
    println!(
        "wrote {} graph embeddings (dim {}) to {}",
        table.len(),
        table.dim(),
        out.display()
    );
    Ok(0)
}

fn fingerprint(dataset: &Path, radius: u32, nbits: usize, out: &Path) -> Result<u8> {
    if nbits == 0 {
        return Err(Error::InvalidArgument("nbits must be positive".into()));
    }
    let records = valid_records(dataset)?;
    let mut table = EmbeddingTable::new(nbits, "morgan")?;
    for r in &records.records {
        let bits = morgan_fingerprint(&parse_smiles(&r.smiles)?, radius, nbits)?;
        table.insert(r.id.clone(), bits.to_dense())?;
    }
    write_embedding_table(&table, out)?;
    println!(
        "wrote {} fingerprints ({nbits} bits, radius {radius}) to {}",
        table.len(),
        out.display()
    );
    Ok(0)
}

/// File values, then command-line overrides.
fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(p) = &args.pipeline {
        config.pipeline = Some(p.clone());
    }
    if args.nested_alpha {
        config.late_fusion.nested = true;
    }
    if args.alpha.is_some() {
        config.late_fusion.alpha = args.alpha;
    }
    config.validate()?;
    Ok(config)
}

fn evaluate(args: EvaluateArgs) -> Result<u8> {
    let mut config = load_config(&args.run)?;
    if let Some(dir) = &args.out_dir {
        config.output_dir = dir.clone();
    }
    if !args.seeds.is_empty() {
        config.seeds = args.seeds.clone();
    }
    let seeds = resolve_seeds(&config.seeds, env_seed().as_deref())?;
    let result = run_experiment(
        &config,
        &seeds,
        ExperimentOptions {
            jobs: args.run.jobs,
        },
    )?;
    let written = write_run_outputs(&result, &result.dataset, &config.output_dir)?;
    println!(
        "{}: pooled leave-one-out over {} samples, {} seeds",
        result.strategy,
        result.n_samples,
        seeds.len()
    );
    for row in result.summary() {
        println!(
            "  {:<6} {:<5} {} +/- {}",
            row.target,
            row.metric,
            format_value(row.mean),
            format_value(row.std)
        );
    }
    println!(
        "  constant-mean R2: k {} E_MPa {}",
        format_value(result.baseline.r2_k),
        format_value(result.baseline.r2_e)
    );
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn predict(args: PredictArgs) -> Result<u8> {
    if args.ids.is_empty() && args.smiles.is_empty() {
        return Err(Error::InvalidArgument(
            "give at least one --id or --smiles".into(),
        ));
    }
    let config = load_config(&args.run)?;
    let seed = match args.seed {
        Some(s) => s,
        None => resolve_seeds(&config.seeds, env_seed().as_deref())?[0],
    };
    let model = train_final_model(
        &config,
        seed,
        ExperimentOptions {
            jobs: args.run.jobs,
        },
    )?;
    println!("input,k,k_std,E_MPa,E_MPa_std");
    let print = |name: &str, p: elastokit::eval::PointPrediction| {
        println!(
            "{name},{},{},{},{}",
            format_value(p.k),
            format_value(p.k_std),
            format_value(p.e_mpa),
            format_value(p.e_std)
        );
    };
    for id in &args.ids {
        print(id, model.predict_id(id)?);
    }
    for s in &args.smiles {
        print(s, model.predict_smiles(s)?);
    }
    Ok(0)
}

fn report(metrics: &Path, predictions: &Path, dataset: &Path, out: &Path) -> Result<u8> {
    let data = read_report_inputs(metrics, predictions)?;
    let records = valid_records(dataset)?;
    for p in render_report(&data, &records, out)? {
        println!("wrote {}", p.display());
    }
    Ok(0)
}
