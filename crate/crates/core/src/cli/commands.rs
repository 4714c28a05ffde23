use std::path::{Path, PathBuf};

use crate::data::{fit_standardizer, load_csv, RegressionDataset, Standardizer};
use crate::error::{Result, SviError};
use crate::eval::{empirical_hellinger_sq, posterior_mean_predict, predict_theta, rmse, sparsity_summary};
use crate::net::NetworkShape;
use crate::rates::{estimation_rate, holder_approx_bound, holder_structure, variational_error};
use crate::rng::{derive_seed, seeded};
use crate::select::select_width;
use crate::teacher::{generate_teacher, synthesize, TeacherNetwork};
use crate::train::train_width;
use crate::variational::{PriorConfig, VariationalParams};

use super::artifacts::{
    read_json, write_json, EvalMetrics, HolderOutput, ParamsFile, RatesOutput, SelectOutput,
    TeacherFile, TrainReport,
};
use super::config::{Resolved, TeacherSpec};

pub const TEACHER_FILE: &str = "teacher.json";
pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const PARAMS_FILE: &str = "params.json";
pub const REPORT_FILE: &str = "report.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const RATES_FILE: &str = "rates.json";
pub const EVAL_FILE: &str = "eval.json";

const STREAM_TEACHER: u64 = 1000;
const STREAM_TRAIN_DATA: u64 = 1001;
const STREAM_TEST_DATA: u64 = 1002;

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SviError::io(dir, e))
}

/// Teacher network plus train and test samples for `seed`, exactly as the
/// `teacher` subcommand produces them.
pub fn teacher_data(
    seed: u64,
    t: &TeacherSpec,
) -> Result<(TeacherNetwork, RegressionDataset, RegressionDataset)> {
    let shape = NetworkShape::regression(t.input_dim, t.widths.clone())?;
    let teacher = generate_teacher(
        &shape,
        t.weight_low,
        t.weight_high,
        t.zero_rate,
        &mut seeded(derive_seed(seed, STREAM_TEACHER)),
    )?;
    let train = synthesize(
        &teacher,
        t.n_train,
        t.sigma_eps,
        &mut seeded(derive_seed(seed, STREAM_TRAIN_DATA)),
    )?;
    let test = synthesize(
        &teacher,
        t.n_test,
        t.sigma_eps,
        &mut seeded(derive_seed(seed, STREAM_TEST_DATA)),
    )?;
    Ok((teacher, train, test))
}

pub fn cmd_teacher(cfg: &Resolved) -> Result<Vec<PathBuf>> {
    let t = &cfg.teacher;
    let (teacher, train, test) = teacher_data(cfg.seed, t)?;

    ensure_dir(&cfg.out)?;
    let file = TeacherFile {
        shape: teacher.shape,
        theta: teacher.theta,
        mask: teacher.mask,
        nonzero_count: teacher.nonzero_count,
        seed: cfg.seed,
        sigma_eps: t.sigma_eps,
        weight_low: t.weight_low,
        weight_high: t.weight_high,
        zero_rate: t.zero_rate,
    };
    let paths = vec![
        cfg.out.join(TEACHER_FILE),
        cfg.out.join(TRAIN_CSV),
        cfg.out.join(TEST_CSV),
    ];
    write_json(&paths[0], &file)?;
    train.write_csv(&paths[1])?;
    test.write_csv(&paths[2])?;
    Ok(paths)
}

/// Training and optional test data, standardized when configured.
struct Prepared {
    train_raw: RegressionDataset,
    test_raw: Option<RegressionDataset>,
    train: RegressionDataset,
    test: Option<RegressionDataset>,
    standardizer: Option<Standardizer>,
}

fn prepare(cfg: &Resolved) -> Result<Prepared> {
    let path = cfg
        .data
        .train
        .as_ref()
        .ok_or_else(|| SviError::Config("data.train is required".into()))?;
    let target = cfg.target();
    let train_raw = load_csv(path, &target)?;
    let test_raw = cfg.data.test.as_ref().map(|p| load_csv(p, &target)).transpose()?;
    if let Some(t) = &test_raw {
        if t.n_features != train_raw.n_features {
            return Err(SviError::Shape("train and test feature counts differ".into()));
        }
    }
    let standardizer = if cfg.data.standardize {
        Some(fit_standardizer(&train_raw)?)
    } else {
        None
    };
    let (train, test) = match &standardizer {
        Some(s) => (s.apply(&train_raw)?, test_raw.as_ref().map(|t| s.apply(t)).transpose()?),
        None => (train_raw.clone(), test_raw.clone()),
    };
    Ok(Prepared {
        train_raw,
        test_raw,
        train,
        test,
        standardizer,
    })
}

fn load_teacher(cfg: &Resolved) -> Result<Option<TeacherFile>> {
    cfg.data.teacher.as_ref().map(|p| read_json(p)).transpose()
}

/// Posterior-mean predictions in original target units.
fn predict_raw(
    file: &ParamsFile,
    params: &VariationalParams,
    ds: &RegressionDataset,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let x = match &file.standardizer {
        Some(s) => s.apply(ds)?.x,
        None => ds.x.clone(),
    };
    let pred = posterior_mean_predict(params, &file.shape, &x, draws, file.tau, &mut seeded(seed))?;
    Ok(match &file.standardizer {
        Some(s) => s.invert_y(&pred),
        None => pred,
    })
}

/// Metrics of a saved model on raw (unstandardized) data. Each dataset gets
/// its own evaluation stream so adding a test set leaves train metrics fixed.
pub fn evaluate_params(
    file: &ParamsFile,
    train: Option<&RegressionDataset>,
    test: Option<&RegressionDataset>,
    teacher: Option<&TeacherFile>,
    draws: usize,
    eval_seed: u64,
    prior: &PriorConfig,
) -> Result<EvalMetrics> {
    let params = file.params()?;
    let train_rmse = train
        .map(|ds| rmse(&predict_raw(file, &params, ds, draws, derive_seed(eval_seed, 0))?, &ds.y))
        .transpose()?;
    let mut test_pred = None;
    let test_rmse = match test {
        Some(ds) => {
            let pred = predict_raw(file, &params, ds, draws, derive_seed(eval_seed, 1))?;
            let r = rmse(&pred, &ds.y)?;
            test_pred = Some(pred);
            Some(r)
        }
        None => None,
    };
    let hellinger_sq = match (teacher, test, test_pred) {
        (Some(t), Some(ds), Some(pred)) => {
            let truth = predict_theta(&t.shape, &t.theta, &ds.x)?;
            let sigma = if t.sigma_eps > 0.0 { t.sigma_eps } else { prior.sigma_eps };
            Some(empirical_hellinger_sq(&pred, &truth, sigma)?)
        }
        _ => None,
    };
    Ok(EvalMetrics {
        draws,
        eval_seed,
        train_rmse,
        test_rmse,
        hellinger_sq,
        sparsity: sparsity_summary(&params),
    })
}

pub fn cmd_train(cfg: &Resolved) -> Result<Vec<PathBuf>> {
    let widths = cfg
        .widths
        .clone()
        .ok_or_else(|| SviError::Config("widths are required for train".into()))?;
    let data = prepare(cfg)?;
    let teacher = load_teacher(cfg)?;
    let shape = NetworkShape::regression(data.train.n_features, widths)?;
    let outcome = train_width(&data.train, &shape, &cfg.prior, &cfg.train)?;

    let params_file = ParamsFile::new(
        &shape,
        &outcome.params,
        cfg.seed,
        cfg.prior.tau,
        data.standardizer.clone(),
    );
    let metrics = evaluate_params(
        &params_file,
        Some(&data.train_raw),
        data.test_raw.as_ref(),
        teacher.as_ref(),
        cfg.eval.draws,
        cfg.eval.seed,
        &cfg.prior,
    )?;
    let report = TrainReport {
        seed: cfg.seed,
        param_count: shape.param_count(),
        shape,
        prior: cfg.prior.clone(),
        train: cfg.train.clone(),
        epochs_run: outcome.epochs_run,
        omega: outcome.report.omega(),
        elbo: outcome.report,
        metrics,
    };

    ensure_dir(&cfg.out)?;
    let paths = vec![cfg.out.join(PARAMS_FILE), cfg.out.join(REPORT_FILE)];
    write_json(&paths[0], &params_file)?;
    write_json(&paths[1], &report)?;
    Ok(paths)
}

pub fn cmd_select(cfg: &Resolved) -> Result<Vec<PathBuf>> {
    if cfg.candidates.is_empty() {
        return Err(SviError::Config("select needs at least one candidate".into()));
    }
    let data = prepare(cfg)?;
    let sel = select_width(
        &data.train,
        &cfg.candidates,
        &cfg.prior,
        &cfg.train,
        data.test.as_ref(),
        cfg.parallel,
    )?;
    let winner_seed = sel.report.winner().seed;
    let params_file = ParamsFile::new(
        &sel.shape,
        &sel.params,
        winner_seed,
        cfg.prior.tau,
        data.standardizer.clone(),
    );
    let out = SelectOutput {
        seed: cfg.seed,
        prior: cfg.prior.clone(),
        train: cfg.train.clone(),
        selection: sel.report,
    };
    ensure_dir(&cfg.out)?;
    let paths = vec![cfg.out.join(SELECTION_FILE), cfg.out.join(PARAMS_FILE)];
    write_json(&paths[0], &out)?;
    write_json(&paths[1], &params_file)?;
    Ok(paths)
}

pub fn rates_output(cfg: &Resolved) -> Result<RatesOutput> {
    let section = cfg
        .rates
        .as_ref()
        .ok_or_else(|| SviError::Config("a rates section is required".into()))?;
    let inputs = section.inputs();
    let holder = match &section.holder {
        Some(h) => {
            let n = inputs.n.round();
            if n < 2.0 {
                return Err(SviError::Argument("holder structure needs n >= 2".into()));
            }
            let structure = holder_structure(h.alpha, inputs.input_dim as u64, n as u64, h.c_n)?;
            let approx_bound = match h.f_norm {
                Some(f) if structure.width > 0.0 => Some(holder_approx_bound(
                    h.alpha,
                    inputs.input_dim as u64,
                    inputs.n,
                    structure.width,
                    f,
                )?),
                _ => None,
            };
            Some(HolderOutput {
                alpha: h.alpha,
                c_n: h.c_n,
                f_norm: h.f_norm,
                structure,
                approx_bound,
            })
        }
        None => None,
    };
    Ok(RatesOutput {
        variational_error: variational_error(&inputs)?,
        estimation_rate: estimation_rate(&inputs)?,
        inputs,
        holder,
    })
}

pub fn cmd_rates(cfg: &Resolved, write: bool) -> Result<RatesOutput> {
    let out = rates_output(cfg)?;
    if write {
        ensure_dir(&cfg.out)?;
        write_json(&cfg.out.join(RATES_FILE), &out)?;
    }
    Ok(out)
}

pub fn cmd_eval(cfg: &Resolved) -> Result<EvalMetrics> {
    let path = cfg
        .eval
        .params
        .as_ref()
        .ok_or_else(|| SviError::Config("eval needs --params or eval.params".into()))?;
    let file: ParamsFile = read_json(path)?;
    let target = cfg.target();
    let train = cfg.data.train.as_ref().map(|p| load_csv(p, &target)).transpose()?;
    let test = cfg.data.test.as_ref().map(|p| load_csv(p, &target)).transpose()?;
    if train.is_none() && test.is_none() {
        return Err(SviError::Config("eval needs data.train or data.test".into()));
    }
    let teacher = load_teacher(cfg)?;
    let metrics = evaluate_params(
        &file,
        train.as_ref(),
        test.as_ref(),
        teacher.as_ref(),
        cfg.eval.draws,
        cfg.eval.seed,
        &cfg.prior,
    )?;
    ensure_dir(&cfg.out)?;
    write_json(&cfg.out.join(EVAL_FILE), &metrics)?;
    Ok(metrics)
}
