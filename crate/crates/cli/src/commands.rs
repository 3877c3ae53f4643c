use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use cat_anova::validation::{run_suite, ValidationOptions};
use cat_anova::{
    decompose, fit_quality, Decomposition64, Distribution64, HyperGrid, OrderingStrategy, SelectionConfig64,
};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{column_index, delimiter_for, load_dataset, read_table, Codebook};
use crate::error::{CliError, CliResult};
use crate::model::{BasisName, DecompositionFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OrderingName {
    Canonical,
    Variance,
    Neighborhood,
}

#[derive(Debug, Clone, clap::Args)]
pub struct DecomposeArgs {
    /// Training file with a header row.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Column holding the model output to explain.
    #[arg(long, short)]
    pub target: String,
    /// Optional column of positive row weights.
    #[arg(long)]
    pub weight: Option<String>,
    /// Field delimiter; defaults to tab for .tsv files and comma otherwise.
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Largest interaction order; defaults to the number of features.
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Maximum number of basis functions; defaults to the support size.
    #[arg(long)]
    pub rank_budget: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    pub rank_tolerance: f64,
    #[arg(long, value_enum, default_value_t = OrderingName::Canonical)]
    pub ordering: OrderingName,
    /// Neighbor lists for `--ordering neighborhood`: one line per feature,
    /// the feature name followed by its neighbors.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    #[arg(long)]
    pub prune_inactive: bool,
    #[arg(long, default_value_t = 0.01)]
    pub prune_threshold: f64,
    #[arg(long, value_enum, default_value_t = BasisName::Hierarchical)]
    pub basis: BasisName,
    #[arg(long, short, default_value = ".")]
    pub output_dir: PathBuf,
    /// Format of the diagnostics report.
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ExplainArgs {
    /// Decomposition file written by `decompose`.
    #[arg(long, short)]
    pub model: PathBuf,
    /// Query rows with a header naming the features.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub delimiter: Option<char>,
    /// Write the attribution table here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ImportanceArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Random instances per check.
    #[arg(long, default_value_t = 5)]
    pub instances: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,
    /// Perturb results before comparison; every check should then fail.
    #[arg(long, hide = true)]
    pub corrupt: bool,
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Shortest round-trip decimal, switching to exponent form for tiny or huge values.
fn num(v: f64) -> String {
    serde_json::Value::from(v).to_string()
}

fn subset_label(subset: &[usize], codebook: &Codebook) -> String {
    if subset.is_empty() {
        return "(intercept)".into();
    }
    subset
        .iter()
        .map(|&i| codebook.features()[i].name.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_adjacency(path: &Path, codebook: &Codebook) -> CliResult<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut adjacency = vec![Vec::new(); codebook.features().len()];
    let lookup = |name: &str, line: usize| {
        codebook
            .position(name)
            .ok_or_else(|| CliError::Data(format!("{}: line {line}: unknown feature '{name}'", path.display())))
    };
    for (n, line) in text.lines().enumerate() {
        let mut names = line
            .split(|c: char| c == ':' || c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty());
        let Some(head) = names.next() else { continue };
        let i = lookup(head, n + 1)?;
        for name in names {
            adjacency[i].push(lookup(name, n + 1)?);
        }
    }
    Ok(adjacency)
}

pub fn cmd_decompose(args: &DecomposeArgs) -> CliResult<()> {
    let start = Instant::now();
    let delimiter = delimiter_for(&args.input, args.delimiter)?;
    let data = load_dataset(&args.input, delimiter, &args.target, args.weight.as_deref())?;
    let dims = data.codebook.features().len();
    let grid = HyperGrid::new(data.codebook.cardinalities())?;
    let dist = Distribution64::from_weighted_rows(&data.rows, &data.weights, Some(grid))?;

    // the explained function on the support is the weighted mean target of each distinct row
    let mut sums = vec![0.0; dist.support_size()];
    let mut mass = vec![0.0; dist.support_size()];
    let support_index: Vec<usize> = data
        .rows
        .iter()
        .map(|row| dist.row_index(row).expect("row in its own support"))
        .collect();
    for ((&k, &y), &w) in support_index.iter().zip(&data.targets).zip(&data.weights) {
        sums[k] += w * y;
        mass[k] += w;
    }
    let f: Vec<f64> = sums.iter().zip(&mass).map(|(s, m)| s / m).collect();
    let loaded = start.elapsed();
    info!(
        "{} rows, {} distinct, {dims} features, grid {:?}",
        data.rows.len(),
        dist.support_size(),
        data.codebook.cardinalities()
    );

    let ordering = match args.ordering {
        OrderingName::Canonical => OrderingStrategy::Canonical,
        OrderingName::Variance => OrderingStrategy::variance_ranked(&dist, &f)?,
        OrderingName::Neighborhood => {
            let path = args
                .adjacency
                .as_ref()
                .ok_or_else(|| CliError::Usage("--ordering neighborhood needs --adjacency".into()))?;
            OrderingStrategy::neighborhood(dims, &parse_adjacency(path, &data.codebook)?)?
        }
    };
    if args.adjacency.is_some() && args.ordering != OrderingName::Neighborhood {
        warn!("--adjacency is ignored without --ordering neighborhood");
    }
    let config = SelectionConfig64 {
        max_order: args.max_order.unwrap_or(dims),
        rank_budget: args.rank_budget,
        rank_tolerance: args.rank_tolerance,
        ordering,
        prune_inactive: args.prune_inactive,
        prune_threshold: args.prune_threshold,
        basis: args.basis.into(),
    };
    config.validate()?;
    if config.max_order > dims {
        return Err(CliError::Usage(format!(
            "--max-order {} exceeds the number of features ({dims})",
            config.max_order
        )));
    }

    let dist = Arc::new(dist);
    let fit_start = Instant::now();
    let dec = decompose(&dist, &f, &config)?;
    let fit_time = fit_start.elapsed();

    // quality is measured on the file rows, so conflicting duplicates count
    let total: f64 = data.weights.iter().sum();
    let row_weights: Vec<f64> = data.weights.iter().map(|w| w / total).collect();
    let row_fitted: Vec<f64> = support_index.iter().map(|&k| dec.fitted()[k]).collect();
    let quality = fit_quality(&row_weights, &data.targets, &row_fitted)?;
    let support_quality = fit_quality(dist.weights(), &f, dec.fitted())?;

    let write_start = Instant::now();
    fs::create_dir_all(&args.output_dir).map_err(|e| CliError::io(&args.output_dir, e))?;
    let model = DecompositionFile::new(&args.target, &data.codebook, &config, &dec);
    model.write(&args.output_dir.join("decomposition.json"))?;

    let norms = dec.component_norms();
    let mut ranked: Vec<(&Vec<usize>, f64)> = norms.iter().map(|(s, &v)| (s, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut table = String::from("subset\torder\tnorm\n");
    for (subset, norm) in &ranked {
        table.push_str(&format!(
            "{}\t{}\t{}\n",
            subset_label(subset, &data.codebook),
            subset.len(),
            num(*norm)
        ));
    }
    let norms_path = args.output_dir.join("norms.tsv");
    fs::write(&norms_path, table).map_err(|e| CliError::io(&norms_path, e))?;

    let pruned: Vec<&str> = dec
        .selection()
        .pruned_features
        .iter()
        .map(|&i| data.codebook.features()[i].name.as_str())
        .collect();
    let diagnostics: Vec<(&str, Value)> = vec![
        ("rows", json!(data.rows.len())),
        ("support_size", json!(dist.support_size())),
        ("achieved_rank", json!(dec.selection().achieved_rank)),
        ("scanned", json!(dec.selection().scanned)),
        ("r_squared", json!(quality.r_squared)),
        ("mse", json!(quality.mse)),
        ("relative_mse", json!(quality.relative_mse)),
        ("variance", json!(quality.variance)),
        // the part of mse no function of the features can remove
        ("irreducible_mse", json!((quality.mse - support_quality.mse).max(0.0))),
        ("orthogonality_metric", json!(dec.orthogonality_metric())),
        ("pruned_features", json!(pruned)),
    ];
    let (path, text) = match args.format {
        OutputFormat::Json => {
            let mut object: serde_json::Map<String, Value> =
                diagnostics.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            let component_norms: Vec<Value> = ranked
                .iter()
                .map(|(s, v)| {
                    let names: Vec<&str> = s.iter().map(|&i| data.codebook.features()[i].name.as_str()).collect();
                    json!({ "subset": names, "norm": v })
                })
                .collect();
            object.insert("component_norms".into(), Value::Array(component_norms));
            (args.output_dir.join("diagnostics.json"), to_json(&object))
        }
        OutputFormat::Tsv => {
            let mut text = String::from("metric\tvalue\n");
            for (k, v) in diagnostics {
                let v = match v {
                    Value::Null => "NA".to_string(),
                    Value::Array(items) => items
                        .iter()
                        .filter_map(Value::as_str)
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                text.push_str(&format!("{k}\t{v}\n"));
            }
            (args.output_dir.join("diagnostics.tsv"), text)
        }
    };
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;

    let timings = BTreeMap::from([
        ("load_seconds", loaded.as_secs_f64()),
        ("decompose_seconds", fit_time.as_secs_f64()),
        ("write_seconds", write_start.elapsed().as_secs_f64()),
        ("total_seconds", start.elapsed().as_secs_f64()),
    ]);
    let timings_path = args.output_dir.join("timings.json");
    fs::write(&timings_path, to_json(&timings)).map_err(|e| CliError::io(&timings_path, e))?;
    info!("wrote {}", args.output_dir.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct ExplainRow {
    line: u64,
    status: &'static str,
    baseline: Option<f64>,
    shap: Option<Vec<f64>>,
    fitted: Option<f64>,
    /// `baseline + Σ shap - fitted`
    efficiency_gap: Option<f64>,
    target: Option<f64>,
    residual: Option<f64>,
    error: Option<String>,
}

fn explain_row(
    dec: &Decomposition64,
    codebook: &Codebook,
    columns: &[usize],
    target_col: Option<usize>,
    line: u64,
    record: &csv::StringRecord,
) -> ExplainRow {
    let mut out = ExplainRow {
        line,
        status: "error",
        baseline: None,
        shap: None,
        fitted: None,
        efficiency_gap: None,
        target: None,
        residual: None,
        error: None,
    };
    let mut row = Vec::with_capacity(columns.len());
    for (i, &c) in columns.iter().enumerate() {
        let label = record.get(c).unwrap_or("").trim();
        match codebook.encode(i, label) {
            Some(code) => row.push(code),
            None => {
                out.error = Some(format!(
                    "unknown label '{label}' for feature '{}'",
                    codebook.features()[i].name
                ));
                return out;
            }
        }
    }
    let attribution = match dec.shapley(&row) {
        Ok(a) => a,
        Err(_) => {
            out.error = Some("combination of labels never observed in training".into());
            return out;
        }
    };
    if let Some(c) = target_col {
        match record.get(c).unwrap_or("").trim().parse::<f64>() {
            Ok(y) => {
                out.target = Some(y);
                out.residual = Some(y - attribution.fitted);
            }
            Err(_) => {
                out.error = Some("target value is not a number".into());
                return out;
            }
        }
    }
    out.status = "ok";
    out.efficiency_gap = Some(attribution.efficiency_gap());
    out.baseline = Some(attribution.baseline);
    out.fitted = Some(attribution.fitted);
    out.shap = Some(attribution.shap);
    out
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

pub fn cmd_explain(args: &ExplainArgs) -> CliResult<()> {
    let model = DecompositionFile::read(&args.model)?;
    let (codebook, dec) = model.restore()?;
    let delimiter = delimiter_for(&args.input, args.delimiter)?;
    let table = read_table(&args.input, delimiter)?;
    let columns: Vec<usize> = codebook
        .names()
        .iter()
        .map(|name| column_index(&table.header, name, &args.input))
        .collect::<CliResult<_>>()?;
    let target_col = table.header.iter().position(|h| *h == model.target);

    let results: Vec<ExplainRow> = {
        use rayon::prelude::*;
        table
            .records
            .par_iter()
            .map(|(line, record)| explain_row(&dec, &codebook, &columns, target_col, *line, record))
            .collect()
    };
    let failures = results.iter().filter(|r| r.status != "ok").count();
    if failures > 0 {
        warn!("{failures} of {} rows could not be explained", results.len());
    }

    let text = match args.format {
        OutputFormat::Json => to_json(&json!({
            "features": codebook.names(),
            "rows": results,
        })),
        OutputFormat::Tsv => {
            let mut header = vec!["line".to_string(), "status".into(), "baseline".into()];
            header.extend(codebook.names().iter().map(|n| format!("shap_{n}")));
            header.extend(["fitted", "efficiency_gap", "target", "residual", "error"].map(String::from));
            let mut text = header.join("\t");
            text.push('\n');
            for r in &results {
                let mut fields = vec![r.line.to_string(), r.status.to_string(), cell(r.baseline)];
                match &r.shap {
                    Some(shap) => fields.extend(shap.iter().map(|&v| num(v))),
                    None => fields.extend(std::iter::repeat_n(String::new(), codebook.names().len())),
                }
                fields.extend([cell(r.fitted), cell(r.efficiency_gap), cell(r.target), cell(r.residual)]);
                fields.push(r.error.clone().unwrap_or_default());
                text.push_str(&fields.join("\t"));
                text.push('\n');
            }
            text
        }
    };
    write_output(args.output.as_deref(), &text)
}

pub fn cmd_importance(args: &ImportanceArgs) -> CliResult<()> {
    let model = DecompositionFile::read(&args.model)?;
    let (codebook, dec) = model.restore()?;
    let mut ranked: Vec<(usize, f64)> = (0..codebook.features().len())
        .map(|i| dec.global_importance(i).map(|v| (i, v)))
        .collect::<Result<_, _>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let text = match args.format {
        OutputFormat::Json => to_json(
            &ranked
                .iter()
                .map(|&(i, v)| json!({ "feature": codebook.features()[i].name, "importance": v }))
                .collect::<Vec<_>>(),
        ),
        OutputFormat::Tsv => {
            let mut text = String::from("rank\tfeature\timportance\n");
            for (rank, &(i, v)) in ranked.iter().enumerate() {
                text.push_str(&format!("{}\t{}\t{}\n", rank + 1, codebook.features()[i].name, num(v)));
            }
            text
        }
    };
    write_output(args.output.as_deref(), &text)
}

pub fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    if args.instances == 0 {
        return Err(CliError::Usage("--instances must be at least 1".into()));
    }
    let options = ValidationOptions {
        seed: args.seed,
        instances: args.instances,
        corrupt: args.corrupt,
    };
    let reports = run_suite(&options)?;
    let text = match args.format {
        OutputFormat::Json => to_json(
            &reports
                .iter()
                .map(|r| {
                    json!({
                        "check": r.name,
                        "max_deviation": r.max_abs_deviation,
                        "tolerance": r.tolerance,
                        "pass": r.pass,
                        "seed": r.seed,
                    })
                })
                .collect::<Vec<_>>(),
        ),
        OutputFormat::Tsv => {
            let mut text = String::from("check\tmax_deviation\ttolerance\tresult\n");
            for r in &reports {
                let result = if r.pass { "pass" } else { "FAIL" };
                text.push_str(&format!(
                    "{}\t{}\t{}\t{result}\n",
                    r.name,
                    num(r.max_abs_deviation),
                    num(r.tolerance)
                ));
            }
            text
        }
    };
    write_output(None, &text)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}
