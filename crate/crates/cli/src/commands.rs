use std::collections::HashMap;
use std::fs;
use std::path::Path;

use lossrate_core::analysis::{
    chained_da_check, compare_smoothness, covariance_taylor, da_inequality_check,
    generalization_bound, gradient_norm_bound, interpolator_ordering, variance_rate_approx,
    variance_taylor, RateMode,
};
use lossrate_core::oracle::{cramer_tail, estimator_bias_probe, exact_cumulant, exact_rate};
use lossrate_core::{
    cumulant_curve, cumulant_derivative, estimate_cumulant, grid_inverse_rate, inverse_rate,
    inverse_rate_curve, load_dataset, rate, rate_curve, save_dataset, DataFormat,
    DiscreteLossDistribution, Extended, LambdaGrid, LossDataset, ModelMeta, SCHEMA_VERSION,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::output::{flatten_row, records_table, write_atomic, Curve, Table};
use crate::{CliError, Context};

pub(crate) enum Body {
    Curve(Curve),
    Report { result: Value, table: Option<Table> },
    Dataset(LossDataset),
}

pub(crate) struct CommandOutput {
    command: &'static str,
    model_id: Option<String>,
    summary: String,
    body: Body,
}

impl CommandOutput {
    fn report(
        command: &'static str,
        model_id: Option<&str>,
        summary: String,
        result: impl Serialize,
    ) -> Self {
        CommandOutput {
            command,
            model_id: model_id.map(String::from),
            summary,
            body: Body::Report {
                result: serde_json::to_value(result).expect("reports serialize"),
                table: None,
            },
        }
    }

    fn with_table(mut self, t: Table) -> Self {
        if let Body::Report { table, .. } = &mut self.body {
            *table = Some(t);
        }
        self
    }

    fn render(&self, format: OutputFormat) -> Result<Vec<u8>, CliError> {
        let text = match (&self.body, format) {
            (Body::Curve(c), f) => c.render(f),
            (Body::Report { result, .. }, OutputFormat::Json) => {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "command": self.command,
                    "model_id": self.model_id,
                    "result": result,
                });
                serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
            }
            (Body::Report { result, table }, OutputFormat::Csv) => match table {
                Some(t) => t.to_csv(),
                None => flatten_row(
                    result,
                    &format!("{} report, schema {SCHEMA_VERSION}", self.command),
                )
                .to_csv(),
            },
            (Body::Dataset(ds), f) => {
                let format = match f {
                    OutputFormat::Csv => DataFormat::Csv,
                    OutputFormat::Json => DataFormat::Jsonl,
                };
                let tmp = tempfile::NamedTempFile::new().map_err(CliError::computation)?;
                save_dataset(ds, tmp.path(), format).flag("--format")?;
                return fs::read(tmp.path()).map_err(CliError::computation);
            }
        };
        Ok(text.into_bytes())
    }

    pub(crate) fn write(&self, cli: &Cli) -> Result<(), CliError> {
        let bytes = self.render(cli.format)?;
        match &cli.output {
            Some(path) => {
                write_atomic(path, &bytes).map_err(|e| {
                    CliError::computation(format!("writing {}: {e}", path.display()))
                })?;
                println!("{}", self.summary);
            }
            None => {
                use std::io::Write;
                let mut out = std::io::stdout().lock();
                out.write_all(&bytes)
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::computation(format!("stdout: {e}")))?;
            }
        }
        Ok(())
    }
}

fn load(input: &InputArgs) -> Result<LossDataset, CliError> {
    load_path(&input.input, input.input_format)
}

fn load_path(path: &Path, format: Option<InputFormat>) -> Result<LossDataset, CliError> {
    let format = match format {
        Some(f) => f.into(),
        None => DataFormat::from_path(path).ok_or_else(|| {
            CliError::validation(
                "--input",
                format!(
                    "cannot tell the format of {} from its extension; pass --input-format",
                    path.display()
                ),
            )
        })?,
    };
    let ds = load_dataset(path, format)
        .map_err(|e| CliError::validation("--input", format!("{}: {e}", path.display())))?;
    eprintln!("loaded {} records from {}", ds.len(), path.display());
    Ok(ds)
}

fn load_dist(args: &DistArgs) -> Result<DiscreteLossDistribution, CliError> {
    DiscreteLossDistribution::load(&args.dist)
        .map_err(|e| CliError::validation("--dist", format!("{}: {e}", args.dist.display())))
}

fn load_outer_map(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation("--outer-map", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation("--outer-map", format!("{}: {e}", path.display())))
}

fn meta(args: &MetaArgs) -> Result<ModelMeta, CliError> {
    if args.p == 0 {
        return Err(CliError::validation("--p", "must be >= 1"));
    }
    if args.n == 0 {
        return Err(CliError::validation("--n", "must be >= 1"));
    }
    if !(args.delta > 0.0 && args.delta < 1.0) {
        return Err(CliError::validation(
            "--delta",
            format!("must lie in (0, 1), got {}", args.delta),
        ));
    }
    if !(args.epsilon.is_finite() && args.epsilon >= 0.0) {
        return Err(CliError::validation(
            "--epsilon",
            format!("must be finite and >= 0, got {}", args.epsilon),
        ));
    }
    ModelMeta::new(args.p, args.n, args.delta, args.epsilon).flag("--p")
}

fn check_tol(tol: f64) -> Result<(), CliError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(CliError::validation(
            "--tol",
            format!("must be finite and positive, got {tol}"),
        ))
    }
}

pub(crate) fn dispatch(command: &Command) -> Result<CommandOutput, CliError> {
    let name = command.name();
    match command {
        Command::Cumulant(a) => cumulant(name, a),
        Command::Rate(a) => rate_cmd(name, a),
        Command::InverseRate(a) => inverse_rate_cmd(name, a),
        Command::GridInverseRate(a) => grid_inverse_rate_cmd(name, a),
        Command::Bound(a) => bound(name, a),
        Command::Compare(a) => compare(name, a),
        Command::InterpolatorCheck(a) => interpolator(name, a),
        Command::Augment(a) => augment(name, a),
        Command::DaCheck(a) => da_check(name, a),
        Command::Taylor(a) => taylor(name, a),
        Command::GradBound(a) => grad_bound(name, a),
        Command::OracleExact(a) => oracle_exact(name, a),
        Command::SimulateCramer(a) => simulate_cramer(name, a),
        Command::BiasProbe(a) => bias_probe(name, a),
    }
}

fn cumulant(name: &'static str, args: &CumulantArgs) -> Result<CommandOutput, CliError> {
    let ds = load(&args.input)?;
    if let Some(lambda) = args.lambda {
        let j = estimate_cumulant(&ds, lambda).flag("--lambda")?;
        let dj = cumulant_derivative(&ds, lambda).flag("--lambda")?;
        let result = json!({ "lambda": lambda, "j": j, "dj": dj, "summary": ds.summarize() });
        return Ok(CommandOutput::report(
            name,
            Some(ds.model_id()),
            format!("J({lambda}) = {j}"),
            result,
        ));
    }
    let grid = args.grid.clone().unwrap_or_default();
    let curve = cumulant_curve(&ds, &grid).flag("--grid")?;
    let summary = format!(
        "cumulant curve over {} points; max J = {}",
        grid.len(),
        curve.j_values.iter().copied().fold(0.0, f64::max)
    );
    Ok(CommandOutput {
        command: name,
        model_id: Some(ds.model_id().into()),
        summary,
        body: Body::Curve(Curve::from(&curve)),
    })
}

fn rate_cmd(name: &'static str, args: &RateArgs) -> Result<CommandOutput, CliError> {
    check_tol(args.tol)?;
    let ds = load(&args.input)?;
    if let Some(grid) = &args.a_grid {
        let points = rate_curve(&ds, grid.values(), args.tol).flag("--a-grid")?;
        let saturated = points.iter().filter(|p| p.saturated).count();
        return Ok(CommandOutput {
            command: name,
            model_id: Some(ds.model_id().into()),
            summary: format!(
                "rate curve over {} points, {saturated} saturated",
                points.len()
            ),
            body: Body::Curve(Curve::Rate(points)),
        });
    }
    let a = args.a.expect("clap requires --a or --a-grid");
    let r = rate(&ds, a, args.tol).flag("--a")?;
    let summary = format!("I({a}) = {}, saturated = {}", r.value, r.saturated);
    Ok(CommandOutput::report(name, Some(ds.model_id()), summary, r))
}

fn inverse_rate_cmd(name: &'static str, args: &InverseRateArgs) -> Result<CommandOutput, CliError> {
    check_tol(args.tol)?;
    let ds = load(&args.input)?;
    if let Some(grid) = &args.s_grid {
        let points = inverse_rate_curve(&ds, grid.values(), args.tol).flag("--s-grid")?;
        let saturated = points.iter().filter(|p| p.saturated).count();
        return Ok(CommandOutput {
            command: name,
            model_id: Some(ds.model_id().into()),
            summary: format!(
                "inverse rate curve over {} points, {saturated} saturated",
                points.len()
            ),
            body: Body::Curve(Curve::InverseRate(points)),
        });
    }
    let s = args.s.expect("clap requires --s or --s-grid");
    let r = inverse_rate(&ds, s, args.tol).flag("--s")?;
    let summary = format!("I^-1({s}) = {}, saturated = {}", r.value, r.saturated);
    Ok(CommandOutput::report(name, Some(ds.model_id()), summary, r))
}

fn grid_inverse_rate_cmd(
    name: &'static str,
    args: &GridInverseRateArgs,
) -> Result<CommandOutput, CliError> {
    let ds = load(&args.input)?;
    let grid = args.grid.clone().unwrap_or_default();
    let r = grid_inverse_rate(&ds, args.s, &grid).flag("--grid")?;
    let summary = format!(
        "grid I^-1({}) = {} over {} points",
        args.s,
        r.value,
        grid.len()
    );
    Ok(CommandOutput::report(name, Some(ds.model_id()), summary, r))
}

fn bound(name: &'static str, args: &BoundArgs) -> Result<CommandOutput, CliError> {
    let meta = meta(&args.meta)?;
    let ds = load(&args.input)?;
    let r = generalization_bound(&ds, &meta, args.train_loss, args.budget.into())
        .flag("--train-loss")?;
    let summary = format!(
        "bound = {} (s = {}, I^-1(s) = {})",
        r.upper_bound, r.s, r.inverse_rate.value
    );
    Ok(CommandOutput::report(name, Some(ds.model_id()), summary, r))
}

fn default_a_grid(a: &LossDataset, b: &LossDataset) -> Result<LambdaGrid, CliError> {
    let (ga, gb) = (a.summarize().loss_gap(), b.summarize().loss_gap());
    let g = if ga.min(gb) > 0.0 {
        ga.min(gb)
    } else {
        ga.max(gb)
    };
    if g > 0.0 {
        LambdaGrid::linear(g / 32.0, g, 32).flag("--a-grid")
    } else {
        LambdaGrid::from_values(vec![1.0]).flag("--a-grid")
    }
}

fn compare(name: &'static str, args: &CompareArgs) -> Result<CommandOutput, CliError> {
    let a = load_path(&args.input[0], args.input_format)?;
    let b = load_path(&args.input[1], args.input_format)?;
    let grid = args.grid.clone().unwrap_or_default();
    let a_grid = match &args.a_grid {
        Some(g) => g.clone(),
        None => default_a_grid(&a, &b)?,
    };
    let v = compare_smoothness(&a, &b, &grid, a_grid.values(), args.beta).flag("--beta")?;
    Ok(CommandOutput::report(name, None, v.to_string(), v))
}

fn interpolator(name: &'static str, args: &InterpolatorArgs) -> Result<CommandOutput, CliError> {
    let meta = meta(&args.meta)?;
    let a = load_path(&args.input[0], args.input_format)?;
    let b = load_path(&args.input[1], args.input_format)?;
    let r = interpolator_ordering(args.train_loss_a, &a, &b, &meta).flag("--train-loss-a")?;
    let summary = format!("premises hold: {}; {}", r.premises_hold, r.claim);
    Ok(CommandOutput::report(name, None, summary, r))
}

fn augment(name: &'static str, args: &AugmentArgs) -> Result<CommandOutput, CliError> {
    let ds = load(&args.input)?;
    let ds = match &args.outer_map {
        Some(path) => ds
            .compose_augmented(&load_outer_map(path)?)
            .flag("--outer-map")?,
        None => ds,
    };
    let reduction = ds.reduce_augmented().flag("--input")?;
    if !reduction.equal_group_sizes {
        eprintln!("warning: group sizes differ; the reduced mean is a mean of group means");
    }
    let summary = format!(
        "reduced {} records to {} groups; mean loss {}",
        ds.len(),
        reduction.group_sizes.len(),
        reduction.dataset.summarize().empirical_loss
    );
    Ok(CommandOutput {
        command: name,
        model_id: Some(ds.model_id().into()),
        summary,
        body: Body::Dataset(reduction.dataset),
    })
}

fn da_check(name: &'static str, args: &DaCheckArgs) -> Result<CommandOutput, CliError> {
    let ds = load(&args.input)?;
    let grid = args.grid.clone().unwrap_or_default();
    if let Some(path) = &args.outer_map {
        let outer = load_outer_map(path)?;
        let r = chained_da_check(&ds, &outer, &grid).flag("--outer-map")?;
        let rows: Vec<Value> = r
            .points
            .iter()
            .map(|p| serde_json::to_value(p).expect("serialize"))
            .collect();
        let table = records_table(
            &rows,
            "chained augmentation check; j_composed <= j_inner <= j_flat expected",
        );
        let summary = format!("chained ordering holds: {}", r.ordered);
        return Ok(CommandOutput::report(name, Some(ds.model_id()), summary, r).with_table(table));
    }
    let r = da_inequality_check(&ds, &grid).flag("--input")?;
    if let Some(w) = &r.warning {
        eprintln!("warning: {w}");
    }
    let rows: Vec<Value> = r
        .points
        .iter()
        .map(|p| serde_json::to_value(p).expect("serialize"))
        .collect();
    let table = records_table(
        &rows,
        "augmentation check; gap = j_flat - j_reduced, expected >= 0",
    );
    let summary = format!(
        "{} groups; jensen holds: {}; mean preserved: {}",
        r.group_count, r.jensen_holds, r.mean_preserved
    );
    Ok(CommandOutput::report(name, Some(ds.model_id()), summary, r).with_table(table))
}

fn taylor(name: &'static str, args: &TaylorArgs) -> Result<CommandOutput, CliError> {
    check_tol(args.tol)?;
    let ds = load(&args.input)?;
    let id = Some(ds.model_id());
    if let Some(delta) = &args.displacement {
        let lambda = args
            .lambda
            .expect("clap requires --lambda with --displacement");
        let r = covariance_taylor(&ds, delta, lambda, args.s).flag("--displacement")?;
        let summary = format!("q = {}, J approx = {}", r.quadratic_form, r.cumulant_approx);
        return Ok(CommandOutput::report(name, id, summary, r));
    }
    let r = match (args.lambda, args.a, args.s) {
        (Some(lambda), None, None) => variance_taylor(&ds, lambda).flag("--lambda")?,
        (None, Some(a), None) => {
            variance_rate_approx(&ds, RateMode::Rate, a, args.tol).flag("--a")?
        }
        (None, None, Some(s)) => {
            variance_rate_approx(&ds, RateMode::InverseRate, s, args.tol).flag("--s")?
        }
        _ => {
            return Err(CliError::validation(
                "--lambda/--a/--s",
                "give exactly one (or --displacement with --lambda)",
            ))
        }
    };
    let summary = format!(
        "exact = {}, approx = {}, |error| = {}",
        r.exact, r.approx, r.abs_error
    );
    Ok(CommandOutput::report(name, id, summary, r))
}

fn grad_bound(name: &'static str, args: &GradBoundArgs) -> Result<CommandOutput, CliError> {
    let ds = load(&args.input)?;
    let r = gradient_norm_bound(&ds, args.m_const, args.s, args.lambda).flag("--m")?;
    let summary = format!(
        "I^-1(s) <= {} (optimized {}), empirical {}",
        r.inverse_rate_bound, r.inverse_rate_bound_at_optimum, r.empirical_inverse_rate
    );
    Ok(CommandOutput::report(name, Some(ds.model_id()), summary, r))
}

#[derive(Serialize)]
struct ExactPoint {
    lambda: f64,
    j: f64,
}

#[derive(Serialize)]
struct ExactRate {
    a: f64,
    value: Extended,
    resolution: usize,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    distribution: &'a DiscreteLossDistribution,
    mean: f64,
    loss_gap: f64,
    min_mass: f64,
    rate: Option<ExactRate>,
    points: Vec<ExactPoint>,
}

fn oracle_exact(name: &'static str, args: &OracleExactArgs) -> Result<CommandOutput, CliError> {
    let dist = load_dist(&args.dist)?;
    if args.resolution == 0 {
        return Err(CliError::validation("--resolution", "must be >= 1"));
    }
    let grid = args.grid.clone().unwrap_or_default();
    let points = grid
        .values()
        .iter()
        .map(|&lambda| {
            Ok(ExactPoint {
                lambda,
                j: exact_cumulant(&dist, lambda).flag("--grid")?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let rate = match args.a {
        Some(a) => Some(ExactRate {
            a,
            value: exact_rate(&dist, a, args.resolution).flag("--a")?,
            resolution: args.resolution,
        }),
        None => None,
    };
    let summary = match &rate {
        Some(r) => format!(
            "exact I({}) = {}; {} cumulant points",
            r.a,
            r.value,
            points.len()
        ),
        None => format!("{} exact cumulant points", points.len()),
    };
    let rows: Vec<Value> = points
        .iter()
        .map(|p| serde_json::to_value(p).expect("serialize"))
        .collect();
    let mut comment = format!(
        "exact cumulant; mean {}, loss gap {}",
        dist.mean(),
        dist.loss_gap()
    );
    if let Some(r) = &rate {
        comment.push_str(&format!(", I({}) = {}", r.a, r.value));
    }
    let table = records_table(&rows, &comment);
    let report = OracleReport {
        distribution: &dist,
        mean: dist.mean(),
        loss_gap: dist.loss_gap(),
        min_mass: dist.min_mass(),
        rate,
        points,
    };
    Ok(CommandOutput::report(name, None, summary, report).with_table(table))
}

fn simulate_cramer(name: &'static str, args: &CramerArgs) -> Result<CommandOutput, CliError> {
    let dist = load_dist(&args.dist)?;
    if args.n == 0 {
        return Err(CliError::validation("--n", "must be >= 1"));
    }
    if args.trials == 0 {
        return Err(CliError::validation("--trials", "must be >= 1"));
    }
    eprintln!("simulating {} trials of n = {}", args.trials, args.n);
    let r = cramer_tail(&dist, args.n, args.a, args.trials, args.seed).flag("--a")?;
    let summary = format!(
        "n = {}: {} hits, -ln(p)/n = {} (exact rate {})",
        r.n, r.hits, r.neg_log_rate, r.exact_rate
    );
    Ok(CommandOutput::report(name, None, summary, r))
}

fn bias_probe(name: &'static str, args: &BiasArgs) -> Result<CommandOutput, CliError> {
    let dist = load_dist(&args.dist)?;
    if args.n == 0 {
        return Err(CliError::validation("--n", "must be >= 1"));
    }
    let r = estimator_bias_probe(&dist, args.n, args.lambda, args.replicates, args.seed)
        .flag("--replicates")?;
    let summary = format!(
        "bias = {} +- {}; underestimates: {}",
        r.bias, r.std_error, r.underestimates
    );
    Ok(CommandOutput::report(name, None, summary, r))
}
