use std::path::{Path, PathBuf};

use covergllvm::distributions::{Family, HurdleParts};
use covergllvm::estimator::{
    fit, predict_expected, predict_presence, CovarianceForm, FitData, FitOptions, FittedModel, OptimizerKind,
};
use covergllvm::exec::Execution;
use covergllvm::io::{self, SiteCovariates};
use covergllvm::metrics::{evaluate, EvaluationInput, MetricReport};
use covergllvm::model::{CovariateMatrix, CutoffMode, LatentUnits, ModelSpec, ResponseKind, ResponseMatrix};
use covergllvm::ordination::{
    dissimilarity, nmds, procrustes_align, procrustes_error, scores_svg, write_scores_csv, NmdsOptions,
    OrdinationScores, ScoreSource,
};
use covergllvm::simulation::{
    replicate_rng, run_sweep, simulate_replicate, summarize, to_daubenmire, to_presence_absence,
    write_records_csv, write_summary_csv, write_timings_csv, Method, SimDesign, SweepOptions, DAUBENMIRE_BOUNDS,
};
use covergllvm::GllvmError;
use ndarray::Array2;
use serde_json::json;

use crate::args::*;
use crate::output::Outputs;

pub enum CliError {
    Usage(String),
    Runtime(GllvmError),
}

impl From<GllvmError> for CliError {
    fn from(e: GllvmError) -> Self {
        CliError::Runtime(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Short machine-readable name of an error.
pub fn kind(e: &GllvmError) -> &'static str {
    match e {
        GllvmError::Dimension(_) => "dimension",
        GllvmError::Domain(_) => "domain",
        GllvmError::Parameter(_) => "parameter",
        GllvmError::Validation(_) => "validation",
        GllvmError::Unsupported(_) => "unsupported",
        GllvmError::FitFailure(_) => "fit-failure",
        GllvmError::Calibration(_) => "calibration",
        GllvmError::Degenerate(_) => "degenerate",
        GllvmError::Parse(_) => "parse",
        GllvmError::Version { .. } => "version",
        GllvmError::Io(_) => "io",
        GllvmError::Json(_) => "json",
        GllvmError::Csv(_) => "csv",
    }
}

fn input(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("input file '{}' does not exist", path.display())))
    }
}

fn input_opt(path: &Option<PathBuf>) -> Result<Option<&Path>> {
    path.as_deref().map(input).transpose()
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Fit(a) => fit_cmd(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
        Command::Ordinate(a) => ordinate(cli, a),
        Command::Nmds(a) => nmds_cmd(cli, a),
        Command::Procrustes(a) => procrustes(cli, a),
        Command::Sweep(a) => sweep(cli, a),
    }
}

fn design(cli: &Cli, a: &DesignArgs, p: f64, reps: usize) -> SimDesign {
    SimDesign {
        n: a.n,
        m: a.m,
        d: a.d,
        one_prop: a.one_prop,
        phi_value: a.phi,
        calibration_cells: a.calibration_cells,
        n_replicates: reps,
        seed: cli.seed,
        ..SimDesign::desk(a.generator, p)
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let design = design(cli, &a.design, a.p, 1);
    design.check()?;
    let mut rng = replicate_rng(cli.seed, 0, a.replicate);
    let (truth, calibration, cover) = simulate_replicate(&design, &mut rng)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    out.write("cover.csv", |b| io::write_responses(&cover, b))?;
    out.write("classes.csv", |b| io::write_responses(&to_daubenmire(&cover)?, b))?;
    out.write("presence.csv", |b| io::write_responses(&to_presence_absence(&cover)?, b))?;
    let dims: Vec<String> = (1..=design.d).map(|k| format!("dim{k}")).collect();
    out.write("true_scores.csv", |b| io::write_table(cover.site_names(), &dims, &truth.scores, b))?;
    out.write_json("truth.json", &json!({ "model": truth, "calibration": calibration }))?;
    out.finish(cli, json!({ "design": design, "daubenmire_bounds": DAUBENMIRE_BOUNDS }), vec![])?;
    Ok(())
}

/// Responses, covariates and units ready for fitting, plus the raw table.
struct Loaded {
    raw: ResponseMatrix,
    view: ResponseMatrix,
    covariates: Option<SiteCovariates>,
    units: LatentUnits,
    ordinal_bounds: Option<Vec<f64>>,
}

fn load(path: &Path, a: &DataSource, family: Family) -> Result<(Loaded, Vec<PathBuf>)> {
    let mut inputs = vec![input(path)?.to_path_buf()];
    let kind = if a.ordinal { ResponseKind::Ordinal } else { ResponseKind::Cover };
    let raw = io::read_responses(path, kind, a.long)?;
    let mut ordinal_bounds = None;
    let view = match (family, kind) {
        (Family::CumulativeLogit, ResponseKind::Cover) => {
            ordinal_bounds = Some(DAUBENMIRE_BOUNDS.to_vec());
            to_daubenmire(&raw)?
        }
        (Family::Bernoulli, ResponseKind::Cover) => to_presence_absence(&raw)?,
        (Family::CumulativeLogit, ResponseKind::Ordinal) => raw.clone(),
        (_, ResponseKind::Ordinal) => {
            return Err(CliError::Usage(format!("family {family} needs cover data, not class labels")));
        }
        _ => raw.clone(),
    };
    let covariates = match input_opt(&a.covariates)? {
        Some(p) => {
            inputs.push(p.to_path_buf());
            Some(io::read_covariates_csv(p)?)
        }
        None => None,
    };
    let units = match input_opt(&a.units)? {
        Some(p) => {
            inputs.push(p.to_path_buf());
            let table = io::read_site_labels(p)?;
            LatentUnits::from_labels(&io::labels_for(&table, raw.site_names())?)
        }
        None => LatentUnits::identity(raw.site_names()),
    };
    Ok((Loaded { raw, view, covariates, units, ordinal_bounds }, inputs))
}

fn model_spec(family: Family, a: &ModelTuning, ordinal_bounds: Option<Vec<f64>>) -> ModelSpec {
    ModelSpec {
        row_effects: a.row_effects,
        hurdle_parts: match a.hurdle {
            HurdleArg::ZerosOnly => HurdleParts::ZerosOnly,
            HurdleArg::ZerosAndOnes => HurdleParts::ZerosAndOnes,
        },
        cutoff_mode: match a.cutoffs {
            CutoffArg::Species => CutoffMode::SpeciesSpecific,
            CutoffArg::Common => CutoffMode::Common,
        },
        ordinal_bounds,
        shift_n: a.shift_n,
        pooled_precision: a.pooled_precision,
        ..ModelSpec::new(family, a.latent_dim)
    }
}

fn fit_options(cli: &Cli, a: &ModelTuning) -> FitOptions {
    FitOptions {
        max_iterations: a.max_iter,
        n_restarts: a.restarts,
        seed: cli.seed,
        variational_cov: if a.full_cov { CovarianceForm::Full } else { CovarianceForm::Diagonal },
        optimizer: match a.optimizer {
            OptimizerArg::QuasiNewton => OptimizerKind::QuasiNewton,
            OptimizerArg::Adam => OptimizerKind::FirstOrderAdaptive,
        },
        execution: Execution::Parallel,
        ..FitOptions::default()
    }
}

fn read_groups(path: &Option<PathBuf>, sites: &[String], inputs: &mut Vec<PathBuf>) -> Result<Option<Vec<String>>> {
    match input_opt(path)? {
        Some(p) => {
            inputs.push(p.to_path_buf());
            Ok(Some(io::labels_for(&io::read_site_labels(p)?, sites)?))
        }
        None => Ok(None),
    }
}

fn write_ordination(out: &mut Outputs, stem: &str, scores: &OrdinationScores, groups: Option<&[String]>, title: &str) -> Result<()> {
    out.write(&format!("{stem}.csv"), |b| write_scores_csv(scores, b))?;
    let svg = scores_svg(scores, groups, title)?;
    out.write(&format!("{stem}.svg"), |b| {
        b.extend_from_slice(svg.as_bytes());
        Ok(())
    })?;
    Ok(())
}

fn fit_loaded(
    cli: &Cli,
    loaded: &Loaded,
    covariates: &CovariateMatrix,
    family: Family,
    a: &ModelTuning,
) -> Result<(FittedModel, ModelSpec, FitOptions)> {
    let spec = model_spec(family, a, loaded.ordinal_bounds.clone());
    let opts = fit_options(cli, a);
    let data = FitData { responses: &loaded.view, covariates, units: &loaded.units };
    let model = fit(data, &spec, &opts)?;
    for w in &model.diagnostics.warnings {
        log::warn!("{w}");
    }
    Ok((model, spec, opts))
}

fn fit_cmd(cli: &Cli, a: &FitArgs) -> Result<()> {
    let (loaded, mut inputs) = load(&a.data, &a.source, a.family)?;
    let covariates = match &loaded.covariates {
        Some(c) => c.aligned_to(loaded.raw.site_names())?,
        None => CovariateMatrix::empty(loaded.raw.n_sites()),
    };
    let groups = read_groups(&a.groups, loaded.units.names(), &mut inputs)?;
    let (model, spec, opts) = fit_loaded(cli, &loaded, &covariates, a.family, &a.tuning)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    out.write("model.json", |b| {
        b.extend_from_slice(io::model_to_json(&model)?.as_bytes());
        Ok(())
    })?;
    if model.spec.latent_dim > 0 {
        let scores = OrdinationScores::from_model(&model)?;
        write_ordination(&mut out, "scores", &scores, groups.as_deref(), &format!("{} GLLVM ordination", spec.family))?;
    }
    out.finish(cli, json!({ "spec": spec, "effective_spec": model.spec, "fit": opts }), inputs)?;
    Ok(())
}

/// Covariate columns named by the model, in its order.
fn model_covariates(model: &FittedModel, table: &SiteCovariates, sites: &[String]) -> Result<CovariateMatrix> {
    let aligned = table.aligned_to(sites)?;
    let mut values = Array2::zeros((sites.len(), model.covariate_names.len()));
    for (k, name) in model.covariate_names.iter().enumerate() {
        let col = aligned
            .column(name)
            .ok_or_else(|| GllvmError::Validation(format!("covariate '{name}' is missing from the new data")))?;
        values.column_mut(k).assign(&col);
    }
    Ok(CovariateMatrix::new(values, model.covariate_names.clone())?)
}

fn site_map(model: &FittedModel, sites: &[String], table: Option<&[(String, String)]>) -> Result<Vec<usize>> {
    let labels = match table {
        Some(t) => io::labels_for(t, sites)?,
        None => sites.to_vec(),
    };
    labels
        .iter()
        .zip(sites)
        .map(|(unit, site)| {
            model.units.index_of(unit).ok_or_else(|| {
                CliError::Runtime(GllvmError::Validation(format!("site '{site}' maps to unknown latent unit '{unit}'")))
            })
        })
        .collect()
}

type Predictions = (Option<Array2<f64>>, Option<Array2<f64>>);

/// Expected cover and presence probability where the family defines them.
fn predictions(model: &FittedModel, covariates: &CovariateMatrix, map: &[usize]) -> Result<Predictions> {
    let keep = |r: covergllvm::Result<Array2<f64>>| match r {
        Ok(v) => Ok(Some(v)),
        Err(GllvmError::Unsupported(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let expected = if model.family() == Family::Bernoulli { None } else { keep(predict_expected(model, covariates, map))? };
    let presence = keep(predict_presence(model, covariates, map))?;
    Ok((expected, presence))
}

fn write_predictions(
    out: &mut Outputs,
    sites: &[String],
    species: &[String],
    expected: &Option<Array2<f64>>,
    presence: &Option<Array2<f64>>,
) -> Result<()> {
    if let Some(e) = expected {
        out.write("predictions_expected.csv", |b| io::write_table(sites, species, e, b))?;
    }
    if let Some(p) = presence {
        out.write("predictions_presence.csv", |b| io::write_table(sites, species, p, b))?;
    }
    Ok(())
}

fn predict(cli: &Cli, a: &PredictArgs) -> Result<()> {
    let mut inputs = vec![input(&a.model)?.to_path_buf()];
    let model = io::read_model(&a.model)?;
    let map_table = match input_opt(&a.site_map)? {
        Some(p) => {
            inputs.push(p.to_path_buf());
            Some(io::read_site_labels(p)?)
        }
        None => None,
    };
    let (sites, covariates) = match input_opt(&a.covariates)? {
        Some(p) => {
            inputs.push(p.to_path_buf());
            let table = io::read_covariates_csv(p)?;
            let sites = table.sites.clone();
            let cov = model_covariates(&model, &table, &sites)?;
            (sites, cov)
        }
        None => {
            if !model.covariate_names.is_empty() {
                return Err(CliError::Usage("the model uses covariates; pass --covariates".into()));
            }
            let Some(t) = &map_table else {
                return Err(CliError::Usage("pass --covariates or --site-map to name the rows to predict".into()));
            };
            let sites: Vec<String> = t.iter().map(|(s, _)| s.clone()).collect();
            let n = sites.len();
            (sites, CovariateMatrix::empty(n))
        }
    };
    let map = site_map(&model, &sites, map_table.as_deref())?;
    let (expected, presence) = predictions(&model, &covariates, &map)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    write_predictions(&mut out, &sites, &model.species_names, &expected, &presence)?;
    out.finish(cli, json!({ "family": model.family(), "site_map": map }), inputs)?;
    Ok(())
}

fn write_report(out: &mut Outputs, report: &MetricReport) -> Result<()> {
    out.write("metrics_species.csv", |b| report.write_species_csv(b))?;
    out.write("metrics_groups.csv", |b| report.write_groups_csv(b))?;
    out.write_json("metrics.json", report)?;
    Ok(())
}

/// A numeric sites × species table aligned to the observed rows and columns.
fn aligned_table(path: &Path, observed: &ResponseMatrix) -> Result<Array2<f64>> {
    let table = io::read_covariates_csv(path)?;
    let rows = table.aligned_to(observed.site_names())?;
    let mut out = Array2::zeros((observed.n_sites(), observed.n_species()));
    for (j, name) in observed.species_names().iter().enumerate() {
        let col = rows.column(name).ok_or_else(|| {
            GllvmError::Validation(format!("{} has no column for species '{name}'", path.display()))
        })?;
        out.column_mut(j).assign(&col);
    }
    Ok(out)
}

fn evaluate_cmd(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    if a.groups == 0 {
        return Err(CliError::Usage("--groups must be at least 1".into()));
    }
    match (a.holdout_after, &a.data, a.family) {
        (Some(year), Some(data), Some(family)) => evaluate_holdout(cli, a, year, data, family),
        (None, _, _) => evaluate_files(cli, a),
        _ => Err(CliError::Usage("--holdout-after needs --data and --family".into())),
    }
}

fn evaluate_files(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let Some(obs_path) = &a.observed else {
        return Err(CliError::Usage("pass --observed with --predictions/--presence, or use --holdout-after".into()));
    };
    let mut inputs = vec![input(obs_path)?.to_path_buf()];
    let observed = io::read_cover_csv(obs_path)?;
    let prevalence = match input_opt(&a.prevalence_data)? {
        Some(p) => {
            inputs.push(p.to_path_buf());
            io::read_cover_csv(p)?
        }
        None => observed.clone(),
    };
    let mut load_table = |p: &Option<PathBuf>| -> Result<Option<Array2<f64>>> {
        match input_opt(p)? {
            Some(p) => {
                inputs.push(p.to_path_buf());
                Ok(Some(aligned_table(p, &observed)?))
            }
            None => Ok(None),
        }
    };
    let expected = load_table(&a.predictions)?;
    let presence = load_table(&a.presence)?;
    if expected.is_none() && presence.is_none() {
        return Err(CliError::Usage("pass --predictions and/or --presence".into()));
    }
    let report = evaluate(EvaluationInput {
        observed: &observed,
        expected: expected.as_ref(),
        presence: presence.as_ref(),
        prevalence_source: &prevalence,
        n_groups: a.groups,
        family: None,
    })?;
    let mut out = Outputs::new(&cli.out_dir)?;
    write_report(&mut out, &report)?;
    out.finish(cli, json!({ "n_groups": a.groups }), inputs)?;
    Ok(())
}

fn evaluate_holdout(cli: &Cli, a: &EvaluateArgs, after: f64, data: &Path, family: Family) -> Result<()> {
    let (loaded, inputs) = load(data, &a.source, family)?;
    let Some(table) = &loaded.covariates else {
        return Err(CliError::Usage(format!("--holdout-after needs --covariates with a '{}' column", a.year_column)));
    };
    let all = table.aligned_to(loaded.raw.site_names())?;
    let Some(year) = all.column(&a.year_column).map(|c| c.to_vec()) else {
        return Err(CliError::Usage(format!("covariates have no '{}' column", a.year_column)));
    };
    let train: Vec<usize> = (0..year.len()).filter(|&i| year[i] <= after).collect();
    let test: Vec<usize> = (0..year.len()).filter(|&i| year[i] > after).collect();
    if train.is_empty() || test.is_empty() {
        return Err(CliError::Runtime(GllvmError::Validation(format!(
            "split at year {after} leaves {} training and {} test rows",
            train.len(),
            test.len()
        ))));
    }
    let covariates = all.without(&a.year_column);
    let train_loaded = Loaded {
        raw: loaded.raw.select_rows(&train)?,
        view: loaded.view.select_rows(&train)?,
        covariates: None,
        units: loaded.units.select_rows(&train),
        ordinal_bounds: loaded.ordinal_bounds.clone(),
    };
    let (model, spec, opts) = fit_loaded(cli, &train_loaded, &covariates.select_rows(&train), family, &a.tuning)?;

    let unit_names = loaded.units.names();
    let test_units: Vec<(String, String)> = test
        .iter()
        .map(|&i| (loaded.raw.site_names()[i].clone(), unit_names[loaded.units.unit_of_row()[i]].clone()))
        .collect();
    let test_sites: Vec<String> = test_units.iter().map(|(s, _)| s.clone()).collect();
    let map = site_map(&model, &test_sites, Some(&test_units))?;
    let (expected, presence) = predictions(&model, &covariates.select_rows(&test), &map)?;
    let observed = loaded.raw.select_rows(&test)?;
    let report = evaluate(EvaluationInput {
        observed: &observed,
        expected: expected.as_ref(),
        presence: presence.as_ref(),
        prevalence_source: &loaded.raw,
        n_groups: a.groups,
        family: Some(spec.family.name()),
    })?;
    let mut out = Outputs::new(&cli.out_dir)?;
    out.write("model.json", |b| {
        b.extend_from_slice(io::model_to_json(&model)?.as_bytes());
        Ok(())
    })?;
    write_predictions(&mut out, &test_sites, &model.species_names, &expected, &presence)?;
    write_report(&mut out, &report)?;
    out.finish(
        cli,
        json!({ "spec": spec, "fit": opts, "train_rows": train.len(), "test_rows": test.len(), "n_groups": a.groups }),
        inputs,
    )?;
    Ok(())
}

fn ordinate(cli: &Cli, a: &OrdinateArgs) -> Result<()> {
    let mut inputs = vec![input(&a.model)?.to_path_buf()];
    let model = io::read_model(&a.model)?;
    if model.spec.latent_dim == 0 {
        return Err(CliError::Runtime(GllvmError::Unsupported("a model without latent variables has no ordination".into())));
    }
    let scores = OrdinationScores::from_model(&model)?;
    let groups = read_groups(&a.groups, &scores.site_names, &mut inputs)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    write_ordination(&mut out, "scores", &scores, groups.as_deref(), &format!("{} GLLVM ordination", model.family()))?;
    out.finish(cli, json!({ "source": ScoreSource::ModelVariationalMeans }), inputs)?;
    Ok(())
}

fn nmds_cmd(cli: &Cli, a: &NmdsArgs) -> Result<()> {
    let mut inputs = vec![input(&a.data)?.to_path_buf()];
    let data = io::read_responses(&a.data, ResponseKind::Cover, a.long)?;
    let groups = read_groups(&a.groups, data.site_names(), &mut inputs)?;
    let opts = NmdsOptions { dim: a.dim, n_restarts: a.restarts, seed: cli.seed, max_iter: a.max_iter, ..NmdsOptions::default() };
    let diss = dissimilarity(&data, a.metric, opts.execution)?;
    let fitted = nmds(&diss, data.site_names(), &opts)?;
    let mut out = Outputs::new(&cli.out_dir)?;
    write_ordination(&mut out, "nmds_scores", &fitted.scores, groups.as_deref(), "NMDS ordination")?;
    out.write_json(
        "nmds_stress.json",
        &json!({
            "stress": fitted.scores.stress,
            "converged": fitted.converged,
            "best_restart": fitted.best_restart,
            "trace": fitted.stress_trace,
        }),
    )?;
    out.finish(cli, json!({ "nmds": opts, "metric": a.metric }), inputs)?;
    Ok(())
}

fn procrustes(cli: &Cli, a: &ProcrustesArgs) -> Result<()> {
    let inputs = vec![input(&a.target)?.to_path_buf(), input(&a.candidate)?.to_path_buf()];
    let target = io::read_covariates_csv(&a.target)?;
    let candidate = io::read_covariates_csv(&a.candidate)?.aligned_to(&target.sites)?;
    let (x, y) = (target.covariates.values(), candidate.values());
    let error = procrustes_error(x.view(), y.view())?;
    let aligned = procrustes_align(x.view(), y.view())?;
    let mut out = Outputs::new(&cli.out_dir)?;
    out.write("procrustes_aligned.csv", |b| io::write_table(&target.sites, target.covariates.names(), &aligned, b))?;
    out.write_json("procrustes.json", &json!({ "error": error, "n_sites": target.sites.len() }))?;
    out.finish(cli, json!({}), inputs)?;
    println!("{error}");
    Ok(())
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    if a.p.is_empty() {
        return Err(CliError::Usage("--p needs at least one value".into()));
    }
    let design = design(cli, &a.design, a.p[0], a.reps);
    let methods: Vec<Method> = if a.methods.is_empty() { Method::ALL.to_vec() } else { a.methods.clone() };
    let mut opts = SweepOptions::default();
    opts.fit.n_restarts = a.restarts;
    opts.fit.max_iterations = a.max_iter;
    opts.nmds.n_restarts = a.nmds_restarts;
    let result = run_sweep(&design, &a.p, &methods, &opts)?;
    let summary = summarize(&result);
    let mut out = Outputs::new(&cli.out_dir)?;
    out.write("sweep_summary.csv", |b| write_summary_csv(&summary, b))?;
    out.write("sweep_records.csv", |b| write_records_csv(&result.records, b))?;
    out.write("sweep_timings.csv", |b| write_timings_csv(&result.records, b))?;
    out.finish(
        cli,
        json!({ "design": design, "zero_props": a.p, "methods": methods, "sweep": opts, "daubenmire_bounds": DAUBENMIRE_BOUNDS }),
        vec![],
    )?;
    Ok(())
}
