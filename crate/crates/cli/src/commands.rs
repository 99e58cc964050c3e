use std::collections::HashSet;
use std::time::Instant;

use markermap_core::data::{load_csv, save_csv, synthesize};
use markermap_core::experiment::{
    run_benchmark, run_evaluate, run_noise, run_reconstruct, run_select, summarize, Approach,
};
use markermap_core::Dataset;

use crate::args::Cli;
use crate::config::{apply_synth_flags, Resolved, RunConfig};
use crate::failure::Failure;
use crate::report::{
    join_indices, opt, BenchmarkSection, DataSummary, MarkerEntry, NoiseSection, Outputs,
    ReconSection, Report, SynthSection, Training,
};

pub const DEFAULT_LABEL_COLUMN: &str = "label";

struct Input {
    data: Dataset,
    planted: Option<Vec<usize>>,
    source: String,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let command = cli.command.name();
    let flags = cli.command.shared();
    let file = flags
        .config
        .as_deref()
        .map(RunConfig::from_file)
        .transpose()?
        .unwrap_or_default();
    let mut merged = RunConfig::from_flags(flags)?.over(file);
    if let Some(spec) = merged.synth.as_mut() {
        apply_synth_flags(spec, flags);
    }
    let config = Resolved::new(command, merged)?;
    let input = load_input(&config)?;
    let out = Outputs::new(&config.out)?;
    let mut report = Report::new(&config, DataSummary::of(&input.data, input.source.clone()));
    match command {
        "select" => select(&config, &input, out, report, start),
        "benchmark" => benchmark(&config, &input, out, report, start),
        "noise" => noise(&config, &input, out, report, start),
        "reconstruct" => reconstruct(&config, &input, out, report, start),
        "evaluate" => evaluate(&config, &input, out, report, start),
        "synth" => {
            let mut out = out;
            save_csv(&input.data, out.path("data.csv"), DEFAULT_LABEL_COLUMN)?;
            let planted = input.planted.clone().unwrap_or_default();
            let names = names_of(&input.data, &planted);
            out.lines("planted.txt", &names)?;
            report.synth = Some(SynthSection {
                planted,
                planted_names: names,
                recovered: None,
            });
            report.timing.total_secs = start.elapsed().as_secs_f64();
            out.report(report)
        }
        _ => unreachable!("clap only produces known commands"),
    }
}

fn load_input(config: &Resolved) -> Result<Input, Failure> {
    if let Some(spec) = &config.synth {
        let syn = synthesize(spec)?;
        return Ok(Input {
            data: syn.dataset,
            planted: Some(syn.planted),
            source: "synthetic".into(),
        });
    }
    let path = config
        .data
        .as_deref()
        .expect("resolved configs have a data source");
    let label_column = match &config.label_column {
        Some(c) => Some(c.clone()),
        None => {
            let mut reader = csv::Reader::from_path(path)
                .map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
            let headers = reader.headers()?;
            headers
                .iter()
                .any(|h| h == DEFAULT_LABEL_COLUMN)
                .then(|| DEFAULT_LABEL_COLUMN.to_string())
        }
    };
    Ok(Input {
        data: load_csv(path, label_column.as_deref())?,
        planted: None,
        source: path.display().to_string(),
    })
}

fn names_of(ds: &Dataset, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| ds.gene_names[j].clone()).collect()
}

/// Map gene names (or, failing that, column indices) to indices.
fn resolve_genes(ds: &Dataset, genes: &[String]) -> Result<Vec<usize>, Failure> {
    let mut seen = HashSet::new();
    genes
        .iter()
        .map(|g| {
            let j = ds
                .gene_names
                .iter()
                .position(|n| n == g)
                .or_else(|| g.parse::<usize>().ok().filter(|&j| j < ds.n_genes()))
                .ok_or_else(|| Failure::new("invalid_argument", format!("unknown gene '{g}'")))?;
            if !seen.insert(j) {
                return Err(Failure::new(
                    "invalid_argument",
                    format!("gene '{g}' listed twice"),
                ));
            }
            Ok(j)
        })
        .collect()
}

fn recovered(planted: &Option<Vec<usize>>, markers: &[usize]) -> Option<usize> {
    planted
        .as_ref()
        .map(|p| markers.iter().filter(|m| p.contains(m)).count())
}

fn select(
    config: &Resolved,
    input: &Input,
    mut out: Outputs,
    mut report: Report<'_>,
    start: Instant,
) -> Result<(), Failure> {
    let ds = &input.data;
    let prior = resolve_genes(ds, &config.prior_markers)?;
    let train = config.train_config(config.single_k(), config.seed, prior);
    let fit_start = Instant::now();
    let outcome = run_select(ds, config.mode, &train, &config.protocol_settings())?;
    report.timing.fit_secs = Some(fit_start.elapsed().as_secs_f64());

    let sel = &outcome.selection;
    out.lines("markers.txt", &names_of(ds, &sel.markers))?;
    if let Some(model) = &sel.model {
        model.save(out.path("model.json"))?;
    }
    report.markers = Some(
        sel.markers
            .iter()
            .enumerate()
            .map(|(i, &j)| MarkerEntry {
                index: j,
                name: ds.gene_names[j].clone(),
                score: sel.scores.as_ref().map(|s| s[i]),
            })
            .collect(),
    );
    if let Some(m) = outcome.metrics {
        out.confusion("confusion.csv", &m, &ds.class_names)?;
        report.classifiers.insert("knn", m);
    }
    if let Some(m) = outcome.model_metrics {
        report.classifiers.insert("model", m);
    }
    report.training = sel.train_report.as_ref().map(Training::from);
    if let Some(planted) = &input.planted {
        report.synth = Some(SynthSection {
            planted: planted.clone(),
            planted_names: names_of(ds, planted),
            recovered: recovered(&input.planted, &sel.markers),
        });
    }
    report.timing.total_secs = start.elapsed().as_secs_f64();
    out.report(report)
}

fn benchmark(
    config: &Resolved,
    input: &Input,
    mut out: Outputs,
    mut report: Report<'_>,
    start: Instant,
) -> Result<(), Failure> {
    let prior = resolve_genes(&input.data, &config.prior_markers)?;
    let train = config.train_config(config.k[0], config.seed, prior);
    let fit_start = Instant::now();
    let rows = run_benchmark(
        &input.data,
        &config.methods,
        &config.k,
        &config.seeds,
        &train,
        &config.protocol_settings(),
    )?;
    report.timing.fit_secs = Some(fit_start.elapsed().as_secs_f64());
    let summary = summarize(&rows);
    out.csv(
        "benchmark.csv",
        &["method", "k", "seed", "accuracy", "weighted_f1", "markers"],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                r.k.to_string(),
                r.seed.to_string(),
                r.accuracy.to_string(),
                r.weighted_f1.to_string(),
                join_indices(&r.markers),
            ]
        }),
    )?;
    out.csv(
        "benchmark_summary.csv",
        &[
            "method",
            "k",
            "runs",
            "mean_accuracy",
            "var_accuracy",
            "std_accuracy",
            "mean_weighted_f1",
            "var_weighted_f1",
            "std_weighted_f1",
        ],
        summary.iter().map(|s| {
            vec![
                s.method.to_string(),
                s.k.to_string(),
                s.runs.to_string(),
                s.mean_accuracy.to_string(),
                s.var_accuracy.to_string(),
                s.std_accuracy.to_string(),
                s.mean_weighted_f1.to_string(),
                s.var_weighted_f1.to_string(),
                s.std_weighted_f1.to_string(),
            ]
        }),
    )?;
    report.benchmark = Some(BenchmarkSection { rows, summary });
    report.timing.total_secs = start.elapsed().as_secs_f64();
    out.report(report)
}

fn noise(
    config: &Resolved,
    input: &Input,
    mut out: Outputs,
    mut report: Report<'_>,
    start: Instant,
) -> Result<(), Failure> {
    let prior = resolve_genes(&input.data, &config.prior_markers)?;
    let train = config.train_config(config.single_k(), config.seed, prior);
    let fit_start = Instant::now();
    let rows = run_noise(
        &input.data,
        config.mode,
        &config.noise,
        &config.seeds,
        config.protocol,
        &train,
        &config.protocol_settings(),
    )?;
    report.timing.fit_secs = Some(fit_start.elapsed().as_secs_f64());
    out.csv(
        "noise.csv",
        &[
            "method",
            "protocol",
            "noise",
            "seed",
            "accuracy",
            "weighted_f1",
            "markers",
        ],
        rows.iter().map(|r| {
            vec![
                r.method.to_string(),
                r.protocol.to_string(),
                r.noise.to_string(),
                r.seed.to_string(),
                r.accuracy.to_string(),
                r.weighted_f1.to_string(),
                join_indices(&r.markers),
            ]
        }),
    )?;
    report.noise = Some(NoiseSection { rows });
    report.timing.total_secs = start.elapsed().as_secs_f64();
    out.report(report)
}

fn reconstruct(
    config: &Resolved,
    input: &Input,
    mut out: Outputs,
    mut report: Report<'_>,
    start: Instant,
) -> Result<(), Failure> {
    let ds = &input.data;
    let Approach::Model(method) = config.mode else {
        return Err(Failure::new(
            "unsupported",
            "random markers have no decoder to reconstruct with",
        ));
    };
    let prior = resolve_genes(ds, &config.prior_markers)?;
    let train = config.train_config(config.single_k(), config.seed, prior);
    let fit_start = Instant::now();
    let r = run_reconstruct(ds, method, &train, &config.protocol_settings())?;
    report.timing.fit_secs = Some(fit_start.elapsed().as_secs_f64());

    let sel = &r.selection;
    out.lines("markers.txt", &names_of(ds, &sel.markers))?;
    if let Some(model) = &sel.model {
        model.save(out.path("model.json"))?;
    }
    out.csv(
        "recon.csv",
        &["group", "cells", "jaccard", "spearman", "mean_l2"],
        r.report.rows.iter().map(|row| {
            vec![
                row.group.clone(),
                row.cells.to_string(),
                row.jaccard.to_string(),
                opt(row.spearman),
                row.mean_l2.to_string(),
            ]
        }),
    )?;
    out.csv(
        "variances.csv",
        &["gene", "original", "reconstructed"],
        (0..ds.n_genes()).map(|j| {
            vec![
                ds.gene_names[j].clone(),
                r.original_variances[j].to_string(),
                r.reconstructed_variances[j].to_string(),
            ]
        }),
    )?;
    let labels = ds.labels.as_deref();
    let pca_rows = [
        ("original", &r.original_coords),
        ("reconstructed", &r.reconstructed_coords),
    ]
    .into_iter()
    .flat_map(|(set, coords)| {
        r.test_cells.iter().enumerate().map(move |(i, &cell)| {
            let label = labels
                .map(|l| ds.class_names[l[cell]].clone())
                .unwrap_or_default();
            vec![
                set.to_string(),
                ds.cell_ids[cell].clone(),
                label,
                coords.row(i)[0].to_string(),
                coords.row(i)[1].to_string(),
            ]
        })
    });
    out.csv("pca.csv", &["set", "cell", "label", "pc1", "pc2"], pca_rows)?;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    report.markers = Some(
        sel.markers
            .iter()
            .enumerate()
            .map(|(i, &j)| MarkerEntry {
                index: j,
                name: ds.gene_names[j].clone(),
                score: sel.scores.as_ref().map(|s| s[i]),
            })
            .collect(),
    );
    report.training = sel.train_report.as_ref().map(Training::from);
    report.reconstruction = Some(ReconSection {
        table: r.report.rows.clone(),
        mean_variance_original: mean(&r.original_variances),
        mean_variance_reconstructed: mean(&r.reconstructed_variances),
        pca_eigenvalues: r.pca.eigenvalues,
    });
    report.timing.total_secs = start.elapsed().as_secs_f64();
    out.report(report)
}

fn evaluate(
    config: &Resolved,
    input: &Input,
    mut out: Outputs,
    mut report: Report<'_>,
    start: Instant,
) -> Result<(), Failure> {
    let ds = &input.data;
    let genes = config
        .markers
        .as_ref()
        .ok_or_else(|| Failure::new("invalid_argument", "evaluate needs --markers <FILE>"))?;
    let markers = resolve_genes(ds, genes)?;
    let metrics = run_evaluate(ds, &markers, config.seed, &config.protocol_settings())?;
    out.confusion("confusion.csv", &metrics, &ds.class_names)?;
    report.markers = Some(
        markers
            .iter()
            .map(|&j| MarkerEntry {
                index: j,
                name: ds.gene_names[j].clone(),
                score: None,
            })
            .collect(),
    );
    report.classifiers.insert("knn", metrics);
    if let Some(planted) = &input.planted {
        report.synth = Some(SynthSection {
            planted: planted.clone(),
            planted_names: names_of(ds, planted),
            recovered: recovered(&input.planted, &markers),
        });
    }
    report.timing.total_secs = start.elapsed().as_secs_f64();
    out.report(report)
}
