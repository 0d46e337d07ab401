//! Implementations of the CLI subcommands.

use crate::config::{RawConfig, SectionReader};
use crate::error::{io_err, CliError};
use crate::panel_io::{read_panel, write_panel, IngestMode};
use ndarray::Array2;
use rfm_core::experiments::{
    self, funnel_rows_to_csv, generate_synthetic_panel, ExperimentConfig, FunnelRow, Metric,
    PairSample, Pooling, SyntheticKind,
};
use rfm_core::pca;
use rfm_core::projection::{Family, ProjectionSpec};
use rfm_core::rfm::{self, ScaleMode};
use rfm_core::theory::{self, McOptions, TheoryReport};
use rfm_core::{DataPanel, Preprocessing};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:03}")).collect()
}

pub fn cmd_ingest(input: &Path, output: &Path, mode: IngestMode) -> Result<(), CliError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| io_err(&format!("reading {}", input.display()), e))?;
    let (panel, ids) = crate::panel_io::ingest_csv(&text, mode)?;
    write_panel(output, &panel, &ids)?;
    println!(
        "ingested {} series x {} observations -> {}",
        panel.n_series(),
        panel.d(),
        output.display()
    );
    Ok(())
}

pub struct GenDataArgs {
    pub kind: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub noise_scale: f64,
    pub factors: usize,
    pub output: PathBuf,
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let kind = synthetic_kind(
        &args.kind,
        args.beta_min,
        args.beta_max,
        args.noise_scale,
        args.factors,
    )?;
    let panel = generate_synthetic_panel(&kind, args.d, args.n, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_panel(&args.output, &panel, &default_ids(args.n))?;
    println!(
        "generated {} panel {}x{} (seed {}) -> {}",
        args.kind,
        args.d,
        args.n,
        args.seed,
        args.output.display()
    );
    Ok(())
}

fn synthetic_kind(
    name: &str,
    beta_min: f64,
    beta_max: f64,
    noise_scale: f64,
    factors: usize,
) -> Result<SyntheticKind, CliError> {
    match name {
        "iid_gaussian" => Ok(SyntheticKind::IidGaussian),
        "one_factor" => Ok(SyntheticKind::OneFactor {
            beta_min,
            beta_max,
            noise_scale,
        }),
        "multi_factor" => Ok(SyntheticKind::MultiFactor {
            factors,
            beta_min,
            beta_max,
            noise_scale,
        }),
        other => Err(CliError::Usage(format!(
            "unknown synthetic kind `{other}` (expected iid_gaussian, one_factor, multi_factor)"
        ))),
    }
}

/// Data source resolved from an experiment config's `[data]` section.
struct DataSource {
    panel: DataPanel,
    description: String,
}

fn load_data_section(raw: &RawConfig, config_dir: &Path) -> Result<DataSource, CliError> {
    let section = raw
        .section("data")
        .ok_or_else(|| CliError::Usage("missing [data] section".into()))?;
    let mut reader = SectionReader::new(section);
    let panel_path: Option<String> = reader.parsed("panel")?;
    let synthetic: Option<String> = reader.parsed("synthetic")?;
    let source = match (panel_path, synthetic) {
        (Some(path), None) => {
            reader.finish()?;
            let resolved = config_dir.join(&path);
            let (panel, _) = read_panel(&resolved)?;
            if panel.preprocessing() == Preprocessing::Raw {
                return Err(CliError::Validation(format!(
                    "{path}: panel is raw; ingest it (which standardizes) first"
                )));
            }
            DataSource {
                panel,
                description: path,
            }
        }
        (None, Some(kind_name)) => {
            let d: usize = reader.require("d")?;
            let n: usize = reader.require("n")?;
            let data_seed: u64 = reader.parsed_or("data_seed", 0)?;
            let beta_min: f64 = reader.parsed_or("beta_min", 0.5)?;
            let beta_max: f64 = reader.parsed_or("beta_max", 1.5)?;
            let noise_scale: f64 = reader.parsed_or("noise_scale", 1.0)?;
            let factors: usize = reader.parsed_or("factors", 3)?;
            reader.finish()?;
            let kind = synthetic_kind(&kind_name, beta_min, beta_max, noise_scale, factors)?;
            let panel = generate_synthetic_panel(&kind, d, n, data_seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            DataSource {
                panel,
                description: format!("{kind_name} d={d} N={n} seed={data_seed}"),
            }
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "[data] must set either `panel` or `synthetic`, not both".into(),
            ))
        }
        (None, None) => {
            return Err(CliError::Usage(
                "[data] must set either `panel` or `synthetic`".into(),
            ))
        }
    };
    Ok(source)
}

struct ExperimentFileConfig {
    experiment: ExperimentConfig,
    universality: bool,
    output: String,
    universality_output: String,
}

fn load_experiment_section(raw: &RawConfig) -> Result<ExperimentFileConfig, CliError> {
    let section = raw
        .section("experiment")
        .ok_or_else(|| CliError::Usage("missing [experiment] section".into()))?;
    let mut reader = SectionReader::new(section);
    let k_grid = reader
        .list("k_grid", |s| s.parse::<usize>().map_err(|e| e.to_string()))?
        .ok_or_else(|| CliError::Usage("missing key `k_grid` in [experiment]".into()))?;
    let families = reader
        .list("families", |s| Family::from_name(s).map_err(|e| e.to_string()))?
        .unwrap_or_else(|| vec![Family::Gaussian]);
    let metrics = reader
        .list("metrics", |s| Metric::from_name(s).map_err(|e| e.to_string()))?
        .unwrap_or_else(|| vec![Metric::CorrError, Metric::CorrAbsError]);
    let ensemble_size: usize = reader.parsed_or("ensemble_size", 1000)?;
    let pair_sample = match reader.string_or("pair_sample", "20000").as_str() {
        "all" => PairSample::All,
        s => PairSample::Sample(s.parse::<usize>().map_err(|_| {
            CliError::Usage(format!("pair_sample must be a count or `all`, got `{s}`"))
        })?),
    };
    let remove_market: bool = reader.parsed_or("remove_market", false)?;
    let base_seed: u64 = reader.parsed_or("base_seed", 0)?;
    let pooling = match reader.string_or("pooling", "pooled").as_str() {
        "pooled" => Pooling::Pooled,
        "per_model" => Pooling::PerModel,
        s => {
            return Err(CliError::Usage(format!(
                "pooling must be `pooled` or `per_model`, got `{s}`"
            )))
        }
    };
    let universality: bool = reader.parsed_or("universality", false)?;
    let output = reader.string_or("output", "funnel.csv");
    let universality_output = reader.string_or("universality_output", "universality.csv");
    reader.finish()?;

    let experiment = ExperimentConfig {
        k_grid,
        ensemble_size,
        families,
        pair_sample,
        metrics,
        remove_market,
        base_seed,
        pooling,
    };
    experiment
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(ExperimentFileConfig {
        experiment,
        universality,
        output,
        universality_output,
    })
}

pub fn cmd_experiment(
    config_path: &Path,
    seed_override: Option<u64>,
    workers: Option<usize>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| io_err(&format!("reading {}", config_path.display()), e))?;
    let raw = RawConfig::parse(&text)?;
    raw.expect_sections(&["data", "experiment"])?;
    let config_dir = config_path.parent().unwrap_or_else(|| Path::new("."));
    let data = load_data_section(&raw, config_dir)?;
    let mut file_config = load_experiment_section(&raw)?;
    if let Some(seed) = seed_override {
        file_config.experiment.base_seed = seed;
    }
    configure_workers(workers)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| io_err(&format!("creating {}", out_dir.display()), e))?;

    let config = &file_config.experiment;
    let mut rows: Vec<FunnelRow> = experiments::run_funnel(&data.panel, config)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if config.remove_market {
        let reduced = experiments::reduced_data_experiment(&data.panel, config)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        rows.extend(reduced);
    }
    let funnel_path = out_dir.join(&file_config.output);
    write_text(&funnel_path, &funnel_rows_to_csv(&rows))?;
    println!("wrote {} funnel rows -> {}", rows.len(), funnel_path.display());

    let mut outputs = vec![file_config.output.clone()];
    if file_config.universality {
        let table = experiments::universality_compare(&data.panel, config)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let path = out_dir.join(&file_config.universality_output);
        write_text(&path, &table.to_csv())?;
        println!(
            "universality table ({}) -> {}",
            if table.all_within_band() {
                "all families within band"
            } else {
                "BAND EXCEEDED"
            },
            path.display()
        );
        outputs.push(file_config.universality_output.clone());
    }

    let mut manifest = String::new();
    writeln!(manifest, "command = experiment").unwrap();
    writeln!(manifest, "version = {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(manifest, "config_hash = {:016x}", fnv1a(text.as_bytes())).unwrap();
    writeln!(manifest, "base_seed = {}", config.base_seed).unwrap();
    writeln!(manifest, "data = {}", data.description).unwrap();
    writeln!(manifest, "outputs = {}", outputs.join(", ")).unwrap();
    write_text(&out_dir.join("manifest.txt"), &manifest)?;
    Ok(())
}

struct TheoryFileConfig {
    family: Family,
    d: usize,
    k: usize,
    trials: usize,
    seed: u64,
    scale_mode: ScaleMode,
    b_grid: Vec<f64>,
    gram: bool,
    pair: PairSource,
    output: String,
}

enum PairSource {
    Synthetic { pair_seed: u64 },
    Panel { path: String, u: usize, v: usize },
}

impl Default for TheoryFileConfig {
    fn default() -> Self {
        Self {
            family: Family::Gaussian,
            d: 100,
            k: 10,
            trials: 100_000,
            seed: 1,
            scale_mode: ScaleMode::CovariancePreserving,
            b_grid: vec![0.05, 0.1, 0.2, 0.5],
            gram: true,
            pair: PairSource::Synthetic { pair_seed: 7 },
            output: "theory_report.csv".into(),
        }
    }
}

fn load_theory_config(raw: &RawConfig) -> Result<TheoryFileConfig, CliError> {
    raw.expect_sections(&["theory"])?;
    let section = raw
        .section("theory")
        .ok_or_else(|| CliError::Usage("missing [theory] section".into()))?;
    let defaults = TheoryFileConfig::default();
    let mut reader = SectionReader::new(section);
    let family = match reader.take("family") {
        Some(entry) => Family::from_name(&entry.value)
            .map_err(|e| CliError::Usage(format!("line {}: {e}", entry.line)))?,
        None => defaults.family,
    };
    let d: usize = reader.parsed_or("d", defaults.d)?;
    let k: usize = reader.parsed_or("k", defaults.k)?;
    let trials: usize = reader.parsed_or("trials", defaults.trials)?;
    let seed: u64 = reader.parsed_or("seed", defaults.seed)?;
    let scale_mode = match reader.string_or("scale_mode", "covariance").as_str() {
        "covariance" => ScaleMode::CovariancePreserving,
        "mean" => ScaleMode::MeanPreserving,
        s => {
            return Err(CliError::Usage(format!(
                "scale_mode must be `covariance` or `mean`, got `{s}`"
            )))
        }
    };
    let b_grid = reader
        .list("b_grid", |s| s.parse::<f64>().map_err(|e| e.to_string()))?
        .unwrap_or(defaults.b_grid);
    let gram: bool = reader.parsed_or("gram", defaults.gram)?;
    let pair = match reader.string_or("u_source", "synthetic").as_str() {
        "synthetic" => PairSource::Synthetic {
            pair_seed: reader.parsed_or("pair_seed", 7)?,
        },
        "panel" => PairSource::Panel {
            path: reader
                .parsed::<String>("panel")?
                .ok_or_else(|| CliError::Usage("u_source = panel needs `panel = <path>`".into()))?,
            u: reader.parsed_or("u_column", 0)?,
            v: reader.parsed_or("v_column", 1)?,
        },
        s => {
            return Err(CliError::Usage(format!(
                "u_source must be `synthetic` or `panel`, got `{s}`"
            )))
        }
    };
    let output = reader.string_or("output", &defaults.output);
    reader.finish()?;
    Ok(TheoryFileConfig {
        family,
        d,
        k,
        trials,
        seed,
        scale_mode,
        b_grid,
        gram,
        pair,
        output,
    })
}

pub fn cmd_validate_theory(
    config_path: Option<&Path>,
    seed_override: Option<u64>,
    workers: Option<usize>,
    out_dir: &Path,
) -> Result<bool, CliError> {
    let mut config = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
            load_theory_config(&RawConfig::parse(&text)?)?
        }
        None => TheoryFileConfig::default(),
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if config.trials < 10_000 {
        return Err(CliError::Usage(format!(
            "trials must be at least 10000, got {}",
            config.trials
        )));
    }
    if config.k < 1 || config.d < 2 {
        return Err(CliError::Usage(format!(
            "need k >= 1 and d >= 2, got k={}, d={}",
            config.k, config.d
        )));
    }
    configure_workers(workers)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| io_err(&format!("creating {}", out_dir.display()), e))?;

    let config_dir = config_path
        .and_then(Path::parent)
        .unwrap_or_else(|| Path::new("."));
    let (u, v) = match &config.pair {
        PairSource::Synthetic { pair_seed } => theory::standardized_pair(config.d, *pair_seed),
        PairSource::Panel { path, u, v } => {
            let (panel, _) = read_panel(&config_dir.join(path))?;
            if panel.d() != config.d {
                return Err(CliError::Usage(format!(
                    "panel has d={}, config says d={}",
                    panel.d(),
                    config.d
                )));
            }
            theory::panel_pair(&panel, *u, *v).map_err(|e| CliError::Usage(e.to_string()))?
        }
    };

    let spec = ProjectionSpec::new(config.family, config.k, config.d, config.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = McOptions {
        scale_mode: config.scale_mode,
        b_grid: config.b_grid.clone(),
        include_gram: config.gram,
    };
    let report = theory::monte_carlo_validate_with(&u, &v, &spec, config.trials, &opts)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    print_report(&report);
    write_text(&out_dir.join(&config.output), &report.to_csv())?;
    println!("report -> {}", out_dir.join(&config.output).display());
    Ok(report.passed())
}

fn print_report(report: &TheoryReport) {
    println!(
        "family={} d={} k={} trials={} seed={} a={:.6e}",
        report.family, report.d, report.k, report.trials, report.seed, report.scale
    );
    println!(
        "{:<24} {:>14} {:>14} {:>12} {:>8}  verdict",
        "quantity", "closed_form", "estimate", "std_error", "z"
    );
    for row in &report.rows {
        println!(
            "{:<24} {:>14.6e} {:>14.6e} {:>12.3e} {:>8.2}  {}",
            row.quantity, row.closed_form, row.estimate, row.std_error, row.z, row.verdict
        );
    }
}

pub fn cmd_pca(
    panel_path: &Path,
    k: Option<usize>,
    remove_market: bool,
    out_dir: &Path,
) -> Result<(), CliError> {
    let (panel, ids) = read_panel(panel_path)?;
    let dec = pca::pca_decompose(&panel).map_err(|e| CliError::Validation(e.to_string()))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| io_err(&format!("creating {}", out_dir.display()), e))?;

    let mut sv = String::from("component,singular_value\n");
    for (i, s) in dec.singular_values.iter().enumerate() {
        writeln!(sv, "{},{}", i + 1, s).unwrap();
    }
    write_text(&out_dir.join("singular_values.csv"), &sv)?;
    println!(
        "rank {} decomposition; leading singular value {}",
        dec.rank(),
        dec.singular_values[0]
    );

    if let Some(k) = k {
        let (factors, loadings) = dec.truncate(k).map_err(|e| CliError::Usage(e.to_string()))?;
        write_matrix_csv(&out_dir.join("factors.csv"), &factors, "factor")?;
        write_loadings_csv(&out_dir.join("loadings.csv"), &loadings, &ids)?;
        let rec = dec.reconstruction(k).map_err(|e| CliError::Usage(e.to_string()))?;
        let rmse = experiments::reconstruction_rmse(panel.values(), &rec)
            .map_err(|e| CliError::Validation(e.to_string()))?;
        println!("rank-{k} reconstruction rmse = {rmse}");
    }

    if remove_market {
        let reduced =
            pca::remove_market_factor(&panel).map_err(|e| CliError::Validation(e.to_string()))?;
        write_panel(&out_dir.join("reduced_panel.csv"), &reduced, &ids)?;
        println!("market factor removed -> {}", out_dir.join("reduced_panel.csv").display());
    }
    Ok(())
}

pub fn cmd_project(
    panel_path: &Path,
    family_name: &str,
    k: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    let (panel, ids) = read_panel(panel_path)?;
    let family = Family::from_name(family_name).map_err(|e| CliError::Usage(e.to_string()))?;
    let spec = ProjectionSpec::new(family, k, panel.d(), seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let dec = rfm::decompose(&panel, &spec).map_err(|e| CliError::Validation(e.to_string()))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| io_err(&format!("creating {}", out_dir.display()), e))?;

    write_matrix_csv(&out_dir.join("factors.csv"), &dec.factors, "factor")?;
    write_loadings_csv(&out_dir.join("loadings.csv"), &dec.loadings, &ids)?;
    let projected = dec.reconstruction();
    let rmse = experiments::reconstruction_rmse(panel.values(), &projected)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let projected_panel = DataPanel::new(projected).map_err(|e| CliError::Validation(e.to_string()))?;
    write_panel(&out_dir.join("projected.csv"), &projected_panel, &ids)?;
    println!(
        "projected with {family} k={k} seed={seed} (a = {:.6e}, a' = {:.6e}); rmse = {rmse}",
        dec.covariance_scale, dec.factor_scale
    );
    Ok(())
}

fn write_matrix_csv(path: &Path, m: &Array2<f64>, prefix: &str) -> Result<(), CliError> {
    let mut out = String::new();
    let cols: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}_{}", j + 1)).collect();
    writeln!(out, "{}", cols.join(",")).unwrap();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    write_text(path, &out)
}

fn write_loadings_csv(path: &Path, loadings: &Array2<f64>, ids: &[String]) -> Result<(), CliError> {
    let mut out = String::new();
    let cols: Vec<String> = (0..loadings.ncols())
        .map(|j| format!("loading_{}", j + 1))
        .collect();
    writeln!(out, "series,{}", cols.join(",")).unwrap();
    for (b, row) in loadings.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{},{}", ids[b], cells.join(",")).unwrap();
    }
    write_text(path, &out)
}

fn configure_workers(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(w) = workers {
        if w < 1 {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("could not configure {w} workers: {e}")))?;
    }
    Ok(())
}
