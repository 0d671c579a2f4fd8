//! Subcommand implementations. `pipeline` calls the same functions as the
//! individual subcommands so both routes write identical bytes.

use std::path::{Path, PathBuf};

use coopra_core::cellsim::{self, ScenarioConfig};
use coopra_core::csvio::{self, ArtifactMeta, TtiCsvReader, TtiCsvWriter};
use coopra_core::loadmon::{combine_directions, WindowAggregator};
use coopra_core::{fusion, Direction, FusedDataset, TransmissionRecord};
use coopra_learn::eval::compare::ApproachResult;
use coopra_learn::eval::{
    compare_approaches, cross_validate, default_svr_grid, gpr_band, grid_search, permute_net_features, Approach,
    CompareOptions, DirectionReport, GridResult,
};
use coopra_learn::featsel::select_features;
use coopra_learn::models::{persist, GprParams};
use coopra_learn::{ModelKind, ModelSpec};

use crate::artifacts::{
    all_feature_names, ensure_dir, parse_feature_spec, parse_params, print_summary, read_pairs, read_records,
    require_file, write_json, write_pairs, BandDoc, EvaluationDoc, Provenance, ReportDoc, SelectionDoc,
};
use crate::error::{CliError, CliResult};
use crate::{
    Command, CompareArgs, CompareOpts, EvaluateArgs, FuseArgs, GprBandArgs, ModelArgs, PipelineArgs,
    SelectArgs, SimulateArgs, TrainArgs,
};

pub const TRANSMISSIONS_CSV: &str = "transmissions.csv";
pub const TTI_CSV: &str = "tti_allocations.csv";
pub const NET_FEATURES_CSV: &str = "net_features.csv";
pub const FUSED_CSV: &str = "fused.csv";
pub const REPORT_JSON: &str = "report.json";

pub fn selection_file(direction: Direction, kind: ModelKind) -> String {
    format!("selection_{}_{kind}.json", direction.suffix())
}

pub fn model_file(direction: Direction, kind: ModelKind) -> String {
    format!("model_{}_{kind}.model", direction.suffix())
}

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Aggregate(a) => aggregate(&a.tti_trace, a.window_ms, &a.out),
        Command::Fuse(a) => fuse(&a),
        Command::Select(a) => select(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Compare(a) => compare(&a),
        Command::Pipeline(a) => pipeline(&a),
        Command::GprBand(a) => gpr_band_cmd(&a),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<ScenarioConfig> {
    require_file(path)?;
    let mut cfg = ScenarioConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config, args.seed)?;
    simulate_to(&cfg, &args.out)
}

fn simulate_to(cfg: &ScenarioConfig, out: &Path) -> CliResult<()> {
    ensure_dir(out)?;
    let meta = ArtifactMeta::new("simulate", Some(cfg.seed), &cfg.config_hash());
    let mut trace = TtiCsvWriter::create(&out.join(TTI_CSV), Some(&meta))?;
    let mut n_alloc = 0u64;
    let summary = cellsim::simulate_into(cfg, |a| {
        n_alloc += 1;
        trace.write(a)
    })?;
    trace.finish()?;
    csvio::write_transmissions_file(&out.join(TRANSMISSIONS_CSV), &summary.records, Some(&meta))?;
    eprintln!(
        "simulated {} transmissions, {n_alloc} grants -> {}",
        summary.records.len(),
        out.display()
    );
    Ok(())
}

fn aggregate(tti_trace: &Path, window_ms: u64, out: &Path) -> CliResult<()> {
    require_file(tti_trace)?;
    let prov = Provenance::of_csv(tti_trace)?;
    let mut agg = WindowAggregator::new(window_ms)?;
    for a in TtiCsvReader::open(tti_trace)? {
        agg.push(&a?)?;
    }
    let windows = agg.finish();
    let meta = prov.meta("aggregate", prov.seed);
    csvio::write_net_features_file(out, &windows, Some(&meta))?;
    eprintln!("{} window rows -> {}", windows.len(), out.display());
    Ok(())
}

fn fuse(args: &FuseArgs) -> CliResult<()> {
    fuse_files(&args.transmissions, &args.net_features, args.window_ms, &args.out)
}

fn fuse_files(transmissions: &Path, net_features: &Path, window_ms: u64, out: &Path) -> CliResult<()> {
    require_file(transmissions)?;
    require_file(net_features)?;
    let prov = Provenance::of_csv(transmissions)?;
    let net_prov = Provenance::of_csv(net_features)?;
    if let (Some(a), Some(b)) = (&prov.config_hash, &net_prov.config_hash) {
        if a != b {
            log::warn!("transmissions (config {a}) and net features (config {b}) come from different scenarios");
        }
    }
    let tx = csvio::read_transmissions(transmissions)?;
    let windows = combine_directions(&csvio::read_net_features(net_features, window_ms)?)?;
    let outcome = fusion::fuse_unordered(&tx, &windows, window_ms)?;
    let meta = prov.meta("fuse", prov.seed);
    csvio::write_fused_file(out, &outcome.records, Some(&meta))?;
    eprintln!(
        "fused {} transmissions ({} without a load window) -> {}",
        outcome.records.len(),
        outcome.dropped,
        out.display()
    );
    Ok(())
}

/// Fused records of one model command, with the provenance and seed in force.
struct ModelInput {
    records: Vec<TransmissionRecord>,
    prov: Provenance,
    seed: u64,
}

impl ModelInput {
    fn load(args: &ModelArgs) -> CliResult<ModelInput> {
        let records = read_records(&args.data)?;
        let prov = Provenance::of_csv(&args.data)?;
        let seed = prov.seed_or(args.seed);
        Ok(ModelInput { records, prov, seed })
    }

    fn dataset(&self, direction: Direction, features: &[String]) -> CliResult<FusedDataset> {
        let ds = fusion::build_dataset(&self.records, direction, features)?;
        if ds.is_empty() {
            return Err(CliError::data(format!("no {} transmissions in the data", direction.code())));
        }
        Ok(ds)
    }

    fn meta(&self, stage: &str) -> ArtifactMeta {
        self.prov.meta(stage, Some(self.seed))
    }
}

/// Hyperparameters from `--params`, or the defaults. SVR without explicit
/// parameters is grid-searched on all features, as `compare` does.
fn resolve_spec(args: &ModelArgs, input: &ModelInput) -> CliResult<(ModelSpec, Option<GridResult>)> {
    if let Some(p) = &args.params {
        return Ok((parse_params(args.model, p)?, None));
    }
    if args.model == ModelKind::Svr {
        let full = input.dataset(args.direction, &all_feature_names())?;
        let grid = grid_search(&default_svr_grid(), &full, args.cv, input.seed)?;
        return Ok((grid.best.clone(), Some(grid)));
    }
    Ok((ModelSpec::default_for(args.model), None))
}

fn select(args: &SelectArgs) -> CliResult<()> {
    let m = &args.model;
    let input = ModelInput::load(m)?;
    let (spec, _) = resolve_spec(m, &input)?;
    let all = all_feature_names();
    let full = input.dataset(m.direction, &all)?;
    let selection = select_features(&spec, &full, &all, m.cv, input.seed)?;
    let meta = input.meta("select");
    write_json(&args.out, &SelectionDoc::new(&meta, m.direction, m.cv, &spec, &selection))?;
    println!(
        "selected {:?} (R² {:.4}, {} models trained)",
        selection.selected,
        selection.final_r2(),
        selection.models_trained
    );
    Ok(())
}

fn train(args: &TrainArgs) -> CliResult<()> {
    let m = &args.model;
    let features = parse_feature_spec(&args.features)?;
    let input = ModelInput::load(m)?;
    let (spec, _) = resolve_spec(m, &input)?;
    train_to(&input, &spec, m.direction, &features, &args.out)
}

fn train_to(input: &ModelInput, spec: &ModelSpec, direction: Direction, features: &[String], out: &Path) -> CliResult<()> {
    let ds = input.dataset(direction, features)?;
    let model = spec.fit(&ds, input.seed)?;
    persist::save(out, &model, Some(&input.meta("train")))?;
    eprintln!("trained {} on {} rows x {} features -> {}", spec.kind(), ds.n_rows(), ds.n_cols(), out.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let m = &args.model;
    let features = parse_feature_spec(&args.features)?;
    let input = ModelInput::load(m)?;
    let (spec, grid) = resolve_spec(m, &input)?;
    let ds = input.dataset(m.direction, &features)?;
    let cv = cross_validate(&spec, &ds, m.cv, input.seed)?;
    let meta = input.meta("evaluate");
    if let Some(out) = &args.out {
        write_json(
            out,
            &EvaluationDoc {
                meta: (&meta).into(),
                model: m.model,
                direction: m.direction,
                features: &features,
                spec: &spec,
                folds: m.cv,
                n_rows: ds.n_rows(),
                pooled: cv.pooled,
                fold_mean: cv.fold_mean,
                per_fold: &cv.per_fold,
                svr_grid: grid.as_ref(),
            },
        )?;
    }
    if let Some(out) = &args.pairs_out {
        write_pairs(out, &meta, &ds.labels, &cv.predictions)?;
    }
    let r2 = cv.pooled.r2.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} {} R² {r2} MAE {:.4} RMSE {:.4} (fold mean RMSE {:.4})",
        m.direction.code(),
        m.model,
        cv.pooled.mae,
        cv.pooled.rmse,
        cv.fold_mean.rmse
    );
    Ok(())
}

fn model_list(opts: &CompareOpts) -> CliResult<Vec<ModelKind>> {
    let mut models = Vec::new();
    for k in &opts.models {
        if !opts.skip_models.contains(k) && !models.contains(k) {
            models.push(*k);
        }
    }
    if models.is_empty() {
        return Err(CliError::usage("no models left to compare"));
    }
    Ok(models)
}

fn compare_options(opts: &CompareOpts, seed: u64) -> CliResult<CompareOptions> {
    Ok(CompareOptions {
        models: model_list(opts)?,
        folds: opts.cv,
        seed,
        band_samples: opts.band_samples,
        ..CompareOptions::default()
    })
}

fn run_comparison(
    records: &[TransmissionRecord],
    directions: &[Direction],
    options: &CompareOptions,
) -> CliResult<Vec<DirectionReport>> {
    directions
        .iter()
        .map(|&d| {
            if !records.iter().any(|r| r.direction == d) {
                return Err(CliError::data(format!("no {} transmissions in the data", d.code())));
            }
            Ok(compare_approaches(records, d, options)?)
        })
        .collect()
}

fn write_report(
    out: &Path,
    meta: &ArtifactMeta,
    options: &CompareOptions,
    noise_control: bool,
    reports: &[DirectionReport],
) -> CliResult<()> {
    write_json(
        out,
        &ReportDoc {
            meta: meta.into(),
            folds: options.folds,
            noise_control,
            directions: reports,
        },
    )
}

fn compare(args: &CompareArgs) -> CliResult<()> {
    let mut records = read_records(&args.data)?;
    let prov = Provenance::of_csv(&args.data)?;
    let seed = prov.seed_or(args.seed);
    let options = compare_options(&args.opts, seed)?;
    if args.noise_control {
        records = permute_net_features(&records, seed);
    }
    let reports = run_comparison(&records, &args.direction.directions(), &options)?;
    write_report(&args.out, &prov.meta("compare", Some(seed)), &options, args.noise_control, &reports)?;
    print_summary(&reports);
    Ok(())
}

fn coop_result(report: &DirectionReport, kind: ModelKind) -> &ApproachResult {
    report
        .result(kind, Approach::Coop)
        .expect("every compared model has a cooperative result")
}

fn pipeline(args: &PipelineArgs) -> CliResult<()> {
    let cfg = load_config(&args.config, args.seed)
        .map_err(|e| e.in_stage("simulate"))?;
    let out = &args.out;
    let path = |name: &str| -> PathBuf { out.join(name) };
    let window = cfg.observation_window_ms;
    let options = compare_options(&args.opts, cfg.seed)?;

    simulate_to(&cfg, out).map_err(|e| e.in_stage("simulate"))?;
    aggregate(&path(TTI_CSV), window, &path(NET_FEATURES_CSV)).map_err(|e| e.in_stage("aggregate"))?;
    fuse_files(&path(TRANSMISSIONS_CSV), &path(NET_FEATURES_CSV), window, &path(FUSED_CSV))
        .map_err(|e| e.in_stage("fuse"))?;

    let fused = path(FUSED_CSV);
    let records = read_records(&fused).map_err(|e| e.in_stage("compare"))?;
    let prov = Provenance::of_csv(&fused)?;
    let input = ModelInput {
        records,
        prov,
        seed: cfg.seed,
    };
    let reports = run_comparison(&input.records, &Direction::ALL, &options).map_err(|e| e.in_stage("compare"))?;

    // The cooperative runs already performed the selection; write it and
    // the models trained on it as `select` and `train` would.
    for report in &reports {
        let d = report.direction;
        for spec in &report.specs {
            let kind = spec.kind();
            let coop = coop_result(report, kind);
            let selection = coop.selection.as_ref().expect("cooperative results carry their selection");
            let meta = input.meta("select");
            write_json(
                &path(&selection_file(d, kind)),
                &SelectionDoc::new(&meta, d, options.folds, spec, selection),
            )
            .map_err(|e| e.in_stage("select"))?;
            if selection.selected.is_empty() {
                log::warn!("{} {kind}: no feature improved on the mean predictor; no model written", d.code());
                continue;
            }
            train_to(&input, spec, d, &selection.selected, &path(&model_file(d, kind)))
                .map_err(|e| e.in_stage("train"))?;
        }
    }
    write_report(&path(REPORT_JSON), &input.meta("compare"), &options, false, &reports)
        .map_err(|e| e.in_stage("compare"))?;
    print_summary(&reports);
    Ok(())
}

fn gpr_band_cmd(args: &GprBandArgs) -> CliResult<()> {
    let (measured, predicted, prov) = read_pairs(&args.pairs)?;
    let seed = prov.seed_or(args.seed);
    let band = gpr_band(&measured, &predicted, &GprParams::default(), args.max_points, args.samples, seed)?
        .ok_or_else(|| CliError::data("a band needs at least two pairs, --max-points >= 2 and --samples >= 1"))?;
    write_json(
        &args.out,
        &BandDoc {
            meta: (&prov.meta("gpr-band", Some(seed))).into(),
            n_pairs: measured.len(),
            band: &band,
        },
    )?;
    eprintln!(
        "band fitted on {} of {} pairs (noise {:.3e}, lengthscale {:.3}) -> {}",
        band.n_fit,
        measured.len(),
        band.noise,
        band.lengthscale,
        args.out.display()
    );
    Ok(())
}
