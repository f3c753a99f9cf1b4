//! Structured result records and method comparison tables.
//!
//! Floats are rounded to 12 significant digits on output; non-finite values
//! are written as the strings `"inf"`, `"-inf"` and `"nan"`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dual::{AscentStatus, StepRule, TraceEntry};
use crate::error::{Error, Result};
use crate::instance::{Labeling, TomographyInstance};
use crate::pipeline::{solve, solve_from, Method, SolveConfig, SolveResult, SolveStatus};

pub const RESULT_FORMAT: &str = "dtomo-result/1";
pub const COMPARE_FORMAT: &str = "dtomo-compare/1";

/// `x` rounded to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Serde adapters for floats with 12 significant digits.
pub mod sig12 {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn decode(r: Repr) -> std::result::Result<f64, String> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(format!("invalid float `{other}`")),
            },
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_str("nan")
        } else if x.is_infinite() {
            s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(round_sig12(*x))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        decode(Repr::deserialize(d)?).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
            match x {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
            match Option::<Repr>::deserialize(d)? {
                Some(r) => decode(r).map(Some).map_err(serde::de::Error::custom),
                None => Ok(None),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub iteration: usize,
    #[serde(with = "sig12")]
    pub dual: f64,
    #[serde(with = "sig12")]
    pub best_dual: f64,
    #[serde(with = "sig12::option")]
    pub best_primal: Option<f64>,
    /// Seconds since the ascent started; absent in deterministic mode.
    #[serde(with = "sig12::option")]
    pub elapsed: Option<f64>,
    #[serde(with = "sig12")]
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub format: String,
    pub method: Method,
    pub instance: Option<String>,
    pub status: SolveStatus,
    #[serde(with = "sig12")]
    pub lower_bound: f64,
    #[serde(with = "sig12::option")]
    pub primal_value: Option<f64>,
    #[serde(with = "sig12::option")]
    pub gap: Option<f64>,
    pub certified: bool,
    pub timed_out: bool,
    pub iterations: usize,
    pub ascent_status: Option<AscentStatus>,
    pub nodes: Option<usize>,
    #[serde(with = "sig12::option")]
    pub wall_time: Option<f64>,
    pub step_rule: StepRule,
    pub max_iters: usize,
    pub deterministic: bool,
    pub labeling: Option<Labeling>,
    pub trace: Vec<TraceRecord>,
}

impl ResultRecord {
    pub fn new(result: &SolveResult, instance: Option<String>) -> Self {
        let det = result.config.deterministic;
        ResultRecord {
            format: RESULT_FORMAT.to_string(),
            method: result.method,
            instance,
            status: result.status,
            lower_bound: result.lower_bound,
            primal_value: result.primal_value,
            gap: result.gap,
            certified: result.certified,
            timed_out: result.timed_out(),
            iterations: result.iterations,
            ascent_status: result.ascent_status,
            nodes: result.nodes,
            wall_time: result.wall_time,
            step_rule: result.config.ascent.step.clone(),
            max_iters: result.config.ascent.max_iters,
            deterministic: det,
            labeling: result.labeling.clone(),
            trace: result.trace.iter().map(|e| trace_record(e, det)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result records serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let rec: ResultRecord = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(e.path().to_string(), e.inner().to_string()))?;
        if rec.format != RESULT_FORMAT {
            return Err(Error::validation("format", format!("expected `{RESULT_FORMAT}`, got `{}`", rec.format)));
        }
        Ok(rec)
    }
}

fn trace_record(e: &TraceEntry, deterministic: bool) -> TraceRecord {
    TraceRecord {
        iteration: e.iteration,
        dual: e.dual,
        best_dual: e.best_dual,
        best_primal: e.best_primal,
        elapsed: (!deterministic).then_some(e.elapsed_seconds),
        step: e.step,
    }
}

/// Outcome of one method on one instance in a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodCell {
    pub method: Method,
    #[serde(with = "sig12::option")]
    pub lower_bound: Option<f64>,
    #[serde(with = "sig12::option")]
    pub primal_value: Option<f64>,
    pub certified: bool,
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    /// Best dual after each iteration.
    pub best_duals: Vec<f64>,
    /// Set when the CTG ascent was continued from the STD multipliers.
    pub warm_started: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub instance: String,
    #[serde(with = "sig12::option")]
    pub ground_truth_energy: Option<f64>,
    pub cells: Vec<MethodCell>,
    /// Certified optimum from any method.
    #[serde(with = "sig12::option")]
    pub optimum: Option<f64>,
    pub ctg_strictly_better: Option<bool>,
    /// `(CTG - STD) / (E* - STD)`, only where a certified optimum exists and
    /// STD is not tight.
    #[serde(with = "sig12::option")]
    pub relative_improvement: Option<f64>,
    /// Some method failed or the bounds are inconsistent.
    pub flagged: bool,
}

impl CompareRow {
    pub fn cell(&self, m: Method) -> Option<&MethodCell> {
        self.cells.iter().find(|c| c.method == m)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub instances: usize,
    /// Instances where the duality gap is below one, per method.
    pub certified: BTreeMap<String, usize>,
    /// Instances where CTG exceeds STD by more than `1e-6`.
    pub ctg_strictly_better: usize,
    /// Instances where both CTG and STD bounds exist.
    pub compared: usize,
    #[serde(with = "sig12::option")]
    pub strictly_better_fraction: Option<f64>,
    #[serde(with = "sig12::option")]
    pub mean_relative_improvement: Option<f64>,
    pub relative_improvement_count: usize,
    pub flagged: usize,
}

/// Per-instance comparison input.
pub struct CompareInput<'a> {
    pub name: String,
    pub instance: Result<TomographyInstance>,
    pub ground_truth: Option<&'a Labeling>,
}

const ORDER_TOL: f64 = 1e-6;

fn cell_from(result: &SolveResult, warm_started: bool) -> MethodCell {
    MethodCell {
        method: result.method,
        lower_bound: Some(result.lower_bound),
        primal_value: result.primal_value,
        certified: result.certified,
        status: Some(result.status),
        iterations: result.iterations,
        best_duals: result.trace.iter().map(|e| e.best_dual).collect(),
        warm_started,
        error: None,
    }
}

fn error_cell(method: Method, message: String) -> MethodCell {
    MethodCell {
        method,
        lower_bound: None,
        primal_value: None,
        certified: false,
        status: None,
        iterations: 0,
        best_duals: Vec::new(),
        warm_started: false,
        error: Some(message),
    }
}

/// Runs `methods` on one instance and derives the comparison columns.
///
/// When both CTG and STD run and CTG ends below STD (possible at a finite
/// iteration budget even though CTG dominates at the optimum), the CTG
/// ascent is continued from STD's best multipliers; CTG's bound at any
/// multipliers is at least STD's there, which restores the ordering.
pub fn compare_instance(input: CompareInput<'_>, methods: &[Method], config: &SolveConfig) -> CompareRow {
    let instance = match input.instance {
        Ok(i) => i,
        Err(e) => {
            return CompareRow {
                instance: input.name,
                ground_truth_energy: None,
                cells: methods.iter().map(|&m| error_cell(m, e.to_string())).collect(),
                optimum: None,
                ctg_strictly_better: None,
                relative_improvement: None,
                flagged: true,
            }
        }
    };
    let gt_energy = input
        .ground_truth
        .filter(|g| instance.check_labeling(g).is_ok())
        .map(|g| instance.evaluate_energy(g));
    let mut results: Vec<(Method, SolveResult)> = Vec::new();
    let order: Vec<Method> = {
        // STD first so its multipliers are available to CTG.
        let mut o = methods.to_vec();
        o.sort_by_key(|m| *m != Method::Std);
        o
    };
    let mut cells: Vec<MethodCell> = Vec::new();
    for &m in &order {
        let mut r = solve(&instance, m, config);
        let mut warm = false;
        if m == Method::Ctg {
            if let Some((_, s)) = results.iter().find(|(mm, _)| *mm == Method::Std) {
                if r.lower_bound < s.lower_bound - ORDER_TOL && s.lambda.is_some() {
                    let cont = solve_from(&instance, m, config, s.lambda.clone());
                    if cont.lower_bound > r.lower_bound {
                        r = cont;
                        warm = true;
                    }
                }
            }
        }
        cells.push(cell_from(&r, warm));
        results.push((m, r));
    }
    cells.sort_by_key(|c| methods.iter().position(|m| *m == c.method));

    let optimum = results
        .iter()
        .filter(|(_, r)| r.certified)
        .filter_map(|(_, r)| r.primal_value)
        .reduce(f64::min);
    let lb = |m: Method| results.iter().find(|(mm, _)| *mm == m).map(|(_, r)| r.lower_bound);
    let (ctg, std) = (lb(Method::Ctg), lb(Method::Std));
    let ctg_strictly_better = ctg.zip(std).map(|(c, s)| c > s + ORDER_TOL);
    let relative_improvement = match (ctg, std, optimum) {
        (Some(c), Some(s), Some(e)) if s < e - ORDER_TOL && s.is_finite() => Some((c - s) / (e - s)),
        _ => None,
    };
    let mut flagged = ctg.zip(std).is_some_and(|(c, s)| c < s - ORDER_TOL);
    for (_, r) in &results {
        if let (Some(e), true) = (optimum, r.lower_bound.is_finite()) {
            flagged |= r.lower_bound > e + ORDER_TOL;
        }
        if let Some(g) = gt_energy {
            flagged |= r.lower_bound > g + ORDER_TOL;
        }
    }
    CompareRow {
        instance: input.name,
        ground_truth_energy: gt_energy,
        cells,
        optimum,
        ctg_strictly_better,
        relative_improvement,
        flagged,
    }
}

/// Column sums of the per-instance flags.
pub fn summarize(rows: &[CompareRow], methods: &[Method]) -> CompareSummary {
    let mut s = CompareSummary {
        instances: rows.len(),
        ..CompareSummary::default()
    };
    for m in methods {
        let n = rows.iter().filter(|r| r.cell(*m).is_some_and(|c| c.certified)).count();
        s.certified.insert(m.name().to_string(), n);
    }
    s.compared = rows.iter().filter(|r| r.ctg_strictly_better.is_some()).count();
    s.ctg_strictly_better = rows.iter().filter(|r| r.ctg_strictly_better == Some(true)).count();
    s.strictly_better_fraction = (s.compared > 0).then(|| s.ctg_strictly_better as f64 / s.compared as f64);
    let rel: Vec<f64> = rows.iter().filter_map(|r| r.relative_improvement).collect();
    s.relative_improvement_count = rel.len();
    s.mean_relative_improvement = (!rel.is_empty()).then(|| rel.iter().sum::<f64>() / rel.len() as f64);
    s.flagged = rows.iter().filter(|r| r.flagged).count();
    s
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) if v.is_nan() => "nan".into(),
        Some(v) if v.is_infinite() => if v > 0.0 { "inf" } else { "-inf" }.into(),
        Some(v) => round_sig12(v).to_string(),
    }
}

/// Writes one CSV row per instance with per-method columns.
pub fn write_compare_csv(out: impl Write, rows: &[CompareRow], methods: &[Method]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["instance".to_string(), "ground_truth_energy".into()];
    for m in methods {
        for col in ["lower_bound", "primal_value", "certified", "status", "iterations", "error"] {
            header.push(format!("{m}_{col}"));
        }
    }
    header.extend(["optimum", "ctg_strictly_better", "relative_improvement", "flagged"].map(String::from));
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv output: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.instance.clone(), fmt_opt(r.ground_truth_energy)];
        for m in methods {
            match r.cell(*m) {
                Some(c) => {
                    rec.push(fmt_opt(c.lower_bound));
                    rec.push(fmt_opt(c.primal_value));
                    rec.push(c.certified.to_string());
                    rec.push(c.status.map(|s| serde_json::to_value(s).unwrap().as_str().unwrap().to_string()).unwrap_or_default());
                    rec.push(c.iterations.to_string());
                    rec.push(c.error.clone().unwrap_or_default());
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 5).chain(["missing".to_string()])),
            }
        }
        rec.push(fmt_opt(r.optimum));
        rec.push(r.ctg_strictly_better.map(|b| b.to_string()).unwrap_or_default());
        rec.push(fmt_opt(r.relative_improvement));
        rec.push(r.flagged.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv output: {e}")))?;
    Ok(())
}

/// Comparison report: summary plus per-instance rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub format: String,
    pub methods: Vec<Method>,
    pub summary: CompareSummary,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn new(rows: Vec<CompareRow>, methods: &[Method]) -> Self {
        CompareReport {
            format: COMPARE_FORMAT.to_string(),
            methods: methods.to_vec(),
            summary: summarize(&rows, methods),
            rows,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_compare_csv(file, &self.rows, &self.methods)
    }
}
