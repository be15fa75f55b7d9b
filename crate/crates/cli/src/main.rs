mod output;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use softsensor_core::dataset::{
    generate_pct_dataset, ingest_csv, rmse, Dataset, NormalizationState, PctParams, Regime,
};
use softsensor_core::experiments::{
    run_csv_workflow, run_illustrative, run_noise_sweep, run_scenario_study, ExperimentSpec, StudyMethod,
};
use softsensor_core::labeling::kmeans_label;
use softsensor_core::mis::{
    build_label_milp, default_a_bar, predict_mis, train_mis_con, train_mis_con_lab, train_mis_sota, MultiModel,
};
use softsensor_core::sis::{
    predict_linear, train_lasso, train_olsr, train_pcr, train_plsr, ComponentConfig, LassoConfig, LinearModel,
};

#[derive(Parser)]
#[command(name = "softsensor", version, about = "Single- and multi-model linear inferential sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with experiment and trainer settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report or model path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated subset of sis_olsr, mis_sota, mis_con, mis_con_lab.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Timestamp recorded in the report. Defaults to SOURCE_DATE_EPOCH, or
    /// the Unix epoch, so that reruns are byte-identical.
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    OneCluster,
    TwoCluster,
    Indistinct,
    Scenario,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainMethod {
    SisOlsr,
    SisPcr,
    SisPlsr,
    SisLasso,
    MisSota,
    MisCon,
    MisConLab,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic PCT dataset as CSV (columns T, p, PCT).
    Generate {
        #[command(flatten)]
        common: Common,
        /// Append the 1-based regime of each row as a `regime` column.
        #[arg(long)]
        with_regime: bool,
        #[arg(long, value_enum, default_value = "two-cluster")]
        case: Case,
        /// Output noise in Kelvin; the config value when omitted.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Train one sensor on every row of a CSV and save it as JSON.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "PCT")]
        output_column: String,
        /// Column excluded from the inputs.
        #[arg(long)]
        timestamp_column: Option<String>,
        #[arg(long, value_enum)]
        method: TrainMethod,
        /// LASSO penalty.
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        /// Components of PCR or PLSR.
        #[arg(long, default_value_t = 1)]
        n_pc: usize,
        /// Write the labeling MILP in LP format (mis_con_lab only).
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Apply a saved sensor to a CSV; writes the rows' predictions.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fits on the one-cluster, two-cluster and indistinct PCT datasets.
    Illustrative {
        #[command(flatten)]
        common: Common,
    },
    /// Desirable versus undesirable split comparison.
    ScenarioStudy {
        #[command(flatten)]
        common: Common,
        /// Regimes used for training in the undesirable split, e.g. `2`.
        #[arg(long, value_delimiter = ',')]
        train_regimes: Option<Vec<usize>>,
    },
    /// Median test RMSE over a set of output noise levels.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
    },
    /// Full design workflow on a measurement CSV.
    CsvWorkflow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output_column: String,
        /// Input of the univariate reference sensor.
        #[arg(long)]
        ref_column: Option<String>,
        #[arg(long)]
        timestamp_column: Option<String>,
    },
}

fn timestamp(explicit: Option<&str>) -> Result<String> {
    if let Some(t) = explicit {
        return Ok(t.to_string());
    }
    let secs: i64 = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse().context("SOURCE_DATE_EPOCH must be an integer")?,
        Err(_) => 0,
    };
    let t = time::OffsetDateTime::from_unix_timestamp(secs)?;
    Ok(t.format(&time::format_description::well_known::Rfc3339)?)
}

/// Loads the config file and applies command-line overrides.
fn load_spec(c: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentSpec::default(),
    };
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    if let Some(r) = c.replicates {
        spec.replicates = r;
    }
    if let Some(ms) = &c.methods {
        spec.methods = ms.iter().map(|m| StudyMethod::parse(m.trim())).collect::<Result<_, _>>()?;
    }
    if c.out.is_some() {
        spec.output = c.out.clone();
    }
    spec.timestamp = match (&c.timestamp, &c.config) {
        (Some(t), _) => t.clone(),
        (None, Some(_)) if spec.timestamp != ExperimentSpec::default().timestamp => spec.timestamp.clone(),
        _ => timestamp(None)?,
    };
    spec.validate()?;
    Ok(spec)
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// A trained sensor together with what is needed to apply it to raw data.
#[derive(Serialize, Deserialize)]
struct SavedSensor {
    method: String,
    input_names: Vec<String>,
    output_name: String,
    normalization: NormalizationState,
    linear: Option<LinearModel>,
    /// Multi-model document as produced by `MultiModel::to_json`.
    multi: Option<serde_json::Value>,
}

fn generate(common: &Common, case: Case, sigma: Option<f64>, with_regime: bool) -> Result<()> {
    let spec = load_spec(common)?;
    let regimes: Vec<Regime> = match case {
        Case::OneCluster => spec.illustrative.one_cluster.clone(),
        Case::TwoCluster => spec.illustrative.two_cluster.clone(),
        Case::Indistinct => spec.illustrative.indistinct.clone(),
        Case::Scenario => spec.regimes.clone(),
    };
    let params = PctParams { seed: spec.seed, noise_sigma: sigma.unwrap_or(spec.pct.noise_sigma), ..spec.pct.clone() };
    let (ds, labels) = generate_pct_dataset(&params, &regimes)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["T", "p", "PCT"];
    if with_regime {
        header.push("regime");
    }
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut rec = vec![ds.inputs[(i, 0)].to_string(), ds.inputs[(i, 1)].to_string(), ds.output[i].to_string()];
        if with_regime {
            rec.push(labels[i].to_string());
        }
        w.write_record(&rec)?;
    }
    write_text(common.out.as_deref(), &String::from_utf8(w.into_inner()?)?)
}

#[allow(clippy::too_many_arguments)]
fn train(
    common: &Common,
    data: &Path,
    output_column: &str,
    timestamp_column: Option<&str>,
    method: TrainMethod,
    lambda: f64,
    n_pc: usize,
    dump_lp: Option<&Path>,
) -> Result<()> {
    let spec = load_spec(common)?;
    let (ds, load) = ingest_csv(data, output_column, timestamp_column)?;
    if load.drop_count > 0 {
        log::warn!("dropped {} of {} rows", load.drop_count, load.rows_read);
    }
    let state = NormalizationState::fit(&ds, spec.norm_mode)?;
    let nd = state.apply(&ds)?;
    let (x, y) = (&nd.inputs, &nd.output);
    let seeded = |cfg: &softsensor_core::mis::MisConfig| softsensor_core::mis::MisConfig { seed: spec.seed, ..cfg.clone() };
    let (name, linear, multi): (&str, Option<LinearModel>, Option<MultiModel>) = match method {
        TrainMethod::SisOlsr => ("sis_olsr", Some(train_olsr(x, y)?), None),
        TrainMethod::SisPcr => ("sis_pcr", Some(train_pcr(x, y, &ComponentConfig { n_pc })?), None),
        TrainMethod::SisPlsr => ("sis_plsr", Some(train_plsr(x, y, &ComponentConfig { n_pc })?), None),
        TrainMethod::SisLasso => ("sis_lasso", Some(train_lasso(x, y, &LassoConfig::new(lambda))?), None),
        TrainMethod::MisSota => ("mis_sota", None, Some(train_mis_sota(x, y, &seeded(&spec.mis_sota))?)),
        TrainMethod::MisCon => {
            let cfg = seeded(&spec.mis_con);
            let labels = kmeans_label(x, 2, cfg.seed, cfg.kmeans_restarts, cfg.kmeans_max_iter)?;
            ("mis_con", None, Some(train_mis_con(x, y, &labels, &cfg)?))
        }
        TrainMethod::MisConLab => ("mis_con_lab", None, Some(train_mis_con_lab(x, y, &seeded(&spec.mis_con_lab), None)?)),
    };
    if let Some(path) = dump_lp {
        if method != TrainMethod::MisConLab {
            bail!("--dump-lp applies to mis_con_lab only");
        }
        let cfg = &spec.mis_con_lab;
        let a_bar = cfg.a_bar.unwrap_or_else(|| default_a_bar(x, y));
        let lm = build_label_milp(x, y, cfg.alpha, cfg.beta, a_bar, cfg.big_m);
        fs::write(path, lm.problem.lp.to_lp_format(&lm.problem.binaries))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let fit = match (&linear, &multi) {
        (Some(m), _) => predict_linear(m, x)?,
        (_, Some(m)) => predict_mis(m, x)?,
        _ => unreachable!(),
    };
    eprintln!("{name}: training RMSE {:.6} (normalized)", rmse(y.as_slice(), fit.as_slice())?);
    let multi = match multi {
        Some(mut m) => {
            m.normalization = Some(state.clone());
            Some(serde_json::from_str(&m.to_json()?)?)
        }
        None => None,
    };
    let saved = SavedSensor {
        method: name.into(),
        input_names: ds.input_names.clone(),
        output_name: ds.output_name.clone(),
        normalization: state,
        linear,
        multi,
    };
    write_text(common.out.as_deref(), &(serde_json::to_string_pretty(&saved)? + "\n"))
}

fn predict(model: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let saved: SavedSensor = serde_json::from_str(&text).context("parsing the model file")?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(data)?;
    let header = rdr.headers()?.clone();
    let cols: Vec<usize> = saved
        .input_names
        .iter()
        .map(|n| header.iter().position(|h| h == n).with_context(|| format!("input column `{n}` missing from {}", data.display())))
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for &j in &cols {
            let v: f64 = rec.get(j).unwrap_or("").parse().with_context(|| format!("row {}: non-numeric input", k + 1))?;
            values.push(v);
        }
        rows += 1;
    }
    let raw = DMatrix::from_row_slice(rows, cols.len(), &values);
    let ds = Dataset::new(raw, nalgebra::DVector::zeros(rows), saved.input_names.clone(), saved.output_name.clone())?;
    let scaled = DMatrix::from_fn(rows, cols.len(), |i, j| saved.normalization.inputs[j].forward(ds.inputs[(i, j)]));
    let pred = match (&saved.linear, &saved.multi) {
        (Some(m), _) => predict_linear(m, &scaled)?,
        (_, Some(doc)) => predict_mis(&MultiModel::from_json(&doc.to_string())?, &scaled)?,
        _ => bail!("model file holds no sensor"),
    };
    let physical = saved.normalization.denormalize(pred.as_slice(), &saved.output_name)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([format!("{}_pred", saved.output_name)])?;
    for v in physical {
        w.write_record([v.to_string()])?;
    }
    write_text(out, &String::from_utf8(w.into_inner()?)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, with_regime, case, sigma } => generate(&common, case, sigma, with_regime),
        Command::Train { common, data, output_column, timestamp_column, method, lambda, n_pc, dump_lp } => train(
            &common,
            &data,
            &output_column,
            timestamp_column.as_deref(),
            method,
            lambda,
            n_pc,
            dump_lp.as_deref(),
        ),
        Command::Predict { model, data, out } => predict(&model, &data, out.as_deref()),
        Command::Illustrative { common } => {
            let spec = load_spec(&common)?;
            output::write_outputs(&run_illustrative(&spec)?, spec.output.as_deref())
        }
        Command::ScenarioStudy { common, train_regimes } => {
            let mut spec = load_spec(&common)?;
            if let Some(r) = train_regimes {
                spec.train_regimes = r.into_iter().collect::<BTreeSet<_>>();
            }
            output::write_outputs(&run_scenario_study(&spec)?, spec.output.as_deref())
        }
        Command::NoiseSweep { common, sigmas } => {
            let mut spec = load_spec(&common)?;
            if let Some(s) = sigmas {
                spec.sigmas = s;
            }
            output::write_outputs(&run_noise_sweep(&spec)?, spec.output.as_deref())
        }
        Command::CsvWorkflow { common, data, output_column, ref_column, timestamp_column } => {
            let mut spec = load_spec(&common)?;
            if ref_column.is_some() {
                spec.csv.ref_column = ref_column;
            }
            if timestamp_column.is_some() {
                spec.csv.timestamp_column = timestamp_column;
            }
            output::write_outputs(&run_csv_workflow(&data, &output_column, &spec)?, spec.output.as_deref())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
