//! JSON documents and small files written by the subcommands, plus the
//! provenance carried from one stage to the next.

use std::fs;
use std::io::Write;
use std::path::Path;

use coopra_core::csvio::{self, ArtifactMeta};
use coopra_core::types::{net_feature_names, ue_feature_names};
use coopra_core::{Direction, TransmissionRecord};
use coopra_learn::eval::compare::{GprBand, ModelSummary};
use coopra_learn::eval::{DirectionReport, GridResult, Metrics};
use coopra_learn::featsel::Selection;
use coopra_learn::{ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Window length assumed when a fused file is read back for learning; the
/// learners only use the feature values, not the window bounds.
pub const DEFAULT_WINDOW_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool_version: String,
    pub stage: String,
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl From<&ArtifactMeta> for Meta {
    fn from(m: &ArtifactMeta) -> Self {
        Meta {
            tool_version: m.tool_version.clone(),
            stage: m.stage.clone(),
            seed: m.seed,
            config_hash: m.config_hash.clone(),
        }
    }
}

/// Seed and config hash inherited from an input artifact.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

impl Provenance {
    pub fn of_csv(path: &Path) -> CliResult<Provenance> {
        Ok(Self::from_meta(csvio::read_meta(path)?.as_ref()))
    }

    pub fn from_meta(meta: Option<&ArtifactMeta>) -> Provenance {
        match meta {
            Some(m) => Provenance {
                seed: m.seed,
                config_hash: Some(m.config_hash.clone()),
            },
            None => Provenance::default(),
        }
    }

    /// The explicit seed wins; otherwise the inherited one, otherwise 0.
    pub fn seed_or(&self, explicit: Option<u64>) -> u64 {
        explicit.or(self.seed).unwrap_or(0)
    }

    pub fn meta(&self, stage: &str, seed: Option<u64>) -> ArtifactMeta {
        ArtifactMeta::new(stage, seed, self.config_hash.as_deref().unwrap_or("none"))
    }
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::data(format!("{}: no such file", path.display())))
    }
}

pub fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_records(path: &Path) -> CliResult<Vec<TransmissionRecord>> {
    require_file(path)?;
    Ok(csvio::read_fused(path, DEFAULT_WINDOW_MS)?)
}

pub fn all_feature_names() -> Vec<String> {
    ue_feature_names().into_iter().chain(net_feature_names()).collect()
}

/// Resolves a feature-set argument: `ue`, `net`, `all`, `@selection.json`
/// or a comma-separated list of column names.
pub fn parse_feature_spec(spec: &str) -> CliResult<Vec<String>> {
    let spec = spec.trim();
    let names = match spec {
        "ue" => ue_feature_names(),
        "net" => net_feature_names(),
        "all" => all_feature_names(),
        _ => {
            if let Some(file) = spec.strip_prefix('@') {
                read_selected(Path::new(file))?
            } else {
                spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
        }
    };
    if names.is_empty() {
        return Err(CliError::data(format!("feature set {spec:?} is empty")));
    }
    let known = all_feature_names();
    if let Some(bad) = names.iter().find(|n| !known.contains(n)) {
        return Err(CliError::usage(format!("unknown feature {bad:?}")));
    }
    Ok(names)
}

fn read_selected(path: &Path) -> CliResult<Vec<String>> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let list = value
        .get("selected")
        .and_then(|v| v.as_array())
        .ok_or_else(|| CliError::data(format!("{}: no \"selected\" list", path.display())))?;
    list.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| CliError::data(format!("{}: non-string feature name", path.display())))
        })
        .collect()
}

/// Hyperparameters for `kind`: module defaults overlaid with the JSON object
/// given on the command line.
pub fn parse_params(kind: ModelKind, params: &str) -> CliResult<ModelSpec> {
    let mut value: serde_json::Value =
        serde_json::from_str(params).map_err(|e| CliError::usage(format!("--params: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::usage("--params must be a JSON object"))?;
    if let Some(k) = obj.get("kind") {
        if k.as_str() != Some(kind.name()) {
            return Err(CliError::usage(format!("--params kind {k} does not match --model {kind}")));
        }
    }
    obj.insert("kind".into(), kind.name().into());
    serde_json::from_value(value).map_err(|e| CliError::usage(format!("--params: {e}")))
}

#[derive(Debug, Serialize)]
pub struct SelectionDoc<'a> {
    pub meta: Meta,
    pub model: ModelKind,
    pub direction: Direction,
    pub folds: usize,
    pub spec: &'a ModelSpec,
    pub candidates: Vec<String>,
    pub selected: &'a [String],
    pub r2_path: &'a [f64],
    pub models_trained: usize,
    pub trace: &'a [coopra_learn::featsel::TraceEntry],
}

impl<'a> SelectionDoc<'a> {
    pub fn new(
        meta: &ArtifactMeta,
        direction: Direction,
        folds: usize,
        spec: &'a ModelSpec,
        selection: &'a Selection,
    ) -> Self {
        SelectionDoc {
            meta: meta.into(),
            model: spec.kind(),
            direction,
            folds,
            spec,
            candidates: all_feature_names(),
            selected: &selection.selected,
            r2_path: &selection.r2_path,
            models_trained: selection.models_trained,
            trace: &selection.trace,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvaluationDoc<'a> {
    pub meta: Meta,
    pub model: ModelKind,
    pub direction: Direction,
    pub features: &'a [String],
    pub spec: &'a ModelSpec,
    pub folds: usize,
    pub n_rows: usize,
    pub pooled: Metrics,
    pub fold_mean: Metrics,
    pub per_fold: &'a [Metrics],
    pub svr_grid: Option<&'a GridResult>,
}

#[derive(Debug, Serialize)]
pub struct ReportDoc<'a> {
    pub meta: Meta,
    pub folds: usize,
    pub noise_control: bool,
    pub directions: &'a [DirectionReport],
}

#[derive(Debug, Serialize)]
pub struct BandDoc<'a> {
    pub meta: Meta,
    pub n_pairs: usize,
    pub band: &'a GprBand,
}

/// Headline numbers per direction, printed after `compare` and `pipeline`.
pub fn print_summary(reports: &[DirectionReport]) {
    for r in reports {
        for s in &r.summary {
            let ModelSummary {
                model,
                rmse_ue,
                rmse_net,
                rmse_coop,
                rmse_change_coop_vs_ue,
                ..
            } = s;
            println!(
                "{} {model:<3} rmse ue {rmse_ue:.3} net {rmse_net:.3} coop {rmse_coop:.3} ({:+.1}%)",
                r.direction.code(),
                100.0 * rmse_change_coop_vs_ue
            );
        }
    }
}

/// Writes `measured,predicted` pairs with a metadata line.
pub fn write_pairs(path: &Path, meta: &ArtifactMeta, measured: &[f64], predicted: &[f64]) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{}", meta.to_line()).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::data(format!("{}: {e}", path.display()));
    w.write_record(["measured", "predicted"]).map_err(err)?;
    for (m, p) in measured.iter().zip(predicted) {
        w.write_record([m.to_string(), p.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_pairs(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>, Provenance)> {
    require_file(path)?;
    let prov = Provenance::of_csv(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("{}: missing column {name:?}", path.display())))
    };
    let (im, ip) = (col("measured")?, col("predicted")?);
    let (mut measured, mut predicted) = (Vec::new(), Vec::new());
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let parse = |i: usize| -> CliResult<f64> {
            row.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::data(format!("{}: bad number on data row {}", path.display(), line + 1)))
        };
        measured.push(parse(im)?);
        predicted.push(parse(ip)?);
    }
    Ok((measured, predicted, prov))
}
