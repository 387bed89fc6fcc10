use std::path::PathBuf;

use jointsa::design::{load_csv, write_atomic};
use jointsa::gam::SmoothSpec;
use jointsa::gp::ResponseScale;
use jointsa::ishigami::{self, BenchSettings, ConvergenceSettings, IshigamiBench};
use jointsa::joint::{fit_joint, Engine, FittedModel, ResidualKind};
use jointsa::report::Report;
use jointsa::sobol::{analyse_joint, IndexLabel, JointAnalysis, TotalVarianceMode};
use jointsa::terms::{parse_terms, split_terms};
use jointsa::{Error, Family, GamSpec, GpOptions, JointModel, JointSpec, Result, TermSpec};

use crate::config::{parse_dists, DistsConfig};

pub const MODEL_FILE: &str = "model.jsa";

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub input: PathBuf,
    pub response: Option<String>,
    pub engine: Engine,
    pub mean_terms: String,
    pub disp_terms: String,
    pub family: Family,
    pub max_outer_iter: usize,
    pub loo: bool,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn parse_engine(s: &str) -> Result<Engine> {
    match s.trim().to_ascii_lowercase().as_str() {
        "glm" => Ok(Engine::Glm),
        "gam" => Ok(Engine::Gam),
        "gp" => Ok(Engine::Gp),
        other => Err(Error::Config(format!("unknown engine `{other}` (expected glm, gam or gp)"))),
    }
}

pub fn parse_family(s: &str) -> Result<Family> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gaussian" | "normal" => Ok(Family::gaussian()),
        "gamma" => Ok(Family::gamma_log()),
        "poisson" => Ok(Family::poisson()),
        "binomial" => Ok(Family::binomial()),
        other => Err(Error::Config(format!(
            "unknown family `{other}` (expected gaussian, gamma, poisson or binomial)"
        ))),
    }
}

fn parametric_only(terms: &str, what: &str, engine: Engine) -> Result<Vec<TermSpec>> {
    let (p, s) = split_terms(&parse_terms(terms)?);
    if !s.is_empty() {
        return Err(Error::Config(format!("{what} terms of a {} model cannot contain smooths", engine.name())));
    }
    Ok(p)
}

fn gam_parts(terms: &str) -> Result<(Vec<TermSpec>, Vec<SmoothSpec>)> {
    Ok(split_terms(&parse_terms(terms)?))
}

pub fn build_spec(args: &FitArgs) -> Result<JointSpec> {
    let mut spec = match args.engine {
        Engine::Glm => JointSpec::glm(
            parametric_only(&args.mean_terms, "mean", Engine::Glm)?,
            args.family,
            parametric_only(&args.disp_terms, "dispersion", Engine::Glm)?,
        )?,
        Engine::Gam => {
            let (mp, ms) = gam_parts(&args.mean_terms)?;
            let (dp, ds) = gam_parts(&args.disp_terms)?;
            JointSpec::gam(GamSpec::new(mp, ms, args.family)?, dp, ds)?
        }
        Engine::Gp => {
            if args.family != Family::gaussian() {
                return Err(Error::Config("the gp engine models a gaussian response".into()));
            }
            let options = GpOptions { seed: args.seed, ..GpOptions::default() };
            JointSpec::gp(
                parametric_only(&args.mean_terms, "mean", Engine::Gp)?,
                parametric_only(&args.disp_terms, "dispersion", Engine::Gp)?,
                options,
            )?
        }
    };
    spec.max_outer_iter = args.max_outer_iter;
    if args.loo {
        spec.residuals = ResidualKind::LeaveOneOut;
    }
    spec.validate()?;
    Ok(spec)
}

fn term_labels(m: &FittedModel) -> Vec<String> {
    match m {
        FittedModel::Glm(g) => g.terms.iter().map(TermSpec::label).collect(),
        FittedModel::Gam(g) => g.spec.parametric.iter().map(TermSpec::label).collect(),
        FittedModel::Gp(g) => g.trend_terms.iter().map(TermSpec::label).collect(),
    }
}

fn component_rows(r: &mut Report, name: &str, m: &FittedModel, lhs: &str) {
    let labels = term_labels(m);
    match m {
        FittedModel::Glm(g) => {
            r.push_text("fit", name, "formula", g.formula(lhs));
            for (k, l) in labels.iter().enumerate() {
                r.push_value("fit", name, &format!("coef[{l}]"), g.beta[k]);
                r.push_value("fit", name, &format!("t[{l}]"), g.t_values[k]);
            }
            r.push_value("fit", name, "D_expl", g.explained_deviance());
            r.push_value("fit", name, "scale", g.scale);
        }
        FittedModel::Gam(g) => {
            r.push_text("fit", name, "formula", g.formula(lhs));
            for (k, l) in labels.iter().enumerate() {
                r.push_value("fit", name, &format!("coef[{l}]"), g.coefficients[k]);
            }
            for (s, lam) in g.spec.smooths.iter().zip(&g.lambdas) {
                r.push_value("fit", name, &format!("lambda[{}]", s.label()), *lam);
            }
            r.push_value("fit", name, "edf", g.edf);
            r.push_value("fit", name, "D_expl", g.explained_deviance());
            r.push_value("fit", name, "gcv", g.gcv);
        }
        FittedModel::Gp(g) => {
            for (k, l) in labels.iter().enumerate() {
                r.push_value("fit", name, &format!("trend[{l}]"), g.trend_beta[k]);
            }
            for (c, t) in g.column_names.iter().zip(&g.theta) {
                r.push_value("fit", name, &format!("theta[{c}]"), *t);
            }
            for (c, p) in g.column_names.iter().zip(&g.power) {
                r.push_value("fit", name, &format!("power[{c}]"), *p);
            }
            r.push_value("fit", name, "sigma2", g.sigma2);
            r.push_value("fit", name, "nugget2", g.nugget2);
            r.push_value("fit", name, "nugget_fraction", g.nugget_fraction());
            if let ResponseScale::Log { calibration } = g.response_scale {
                r.push_text("fit", name, "scale", "log");
                r.push_value("fit", name, "log_calibration", calibration);
            }
        }
    }
}

pub fn fit_report(jm: &JointModel, seed: u64) -> Report {
    let mut r = Report::new(format!("joint {} fit", jm.engine().name()), seed);
    component_rows(&mut r, "mean", &jm.mean_model, "Y_m");
    component_rows(&mut r, "dispersion", &jm.disp_model, "log(Y_d)");
    r.push_value("fit", "joint", "outer_iterations", jm.outer_iterations as f64);
    r.push_value("fit", "joint", "selected_iteration", jm.selected_iteration as f64);
    r.push_text("fit", "joint", "converged", jm.converged.to_string());
    r
}

/// Fits the joint model, writes `model.jsa` and the fit summary; returns
/// the model path.
pub fn cmd_fit(args: &FitArgs) -> Result<(PathBuf, Report)> {
    let spec = build_spec(args)?;
    let data = load_csv(&args.input, args.response.as_deref())?;
    let jm = fit_joint(&data, &spec)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join(MODEL_FILE);
    jm.save(&path)?;
    let report = fit_report(&jm, args.seed);
    report.write(&args.out, "fit_summary")?;
    Ok((path, report))
}

#[derive(Debug, Clone)]
pub struct SobolArgs {
    pub model: PathBuf,
    pub dists: DistsConfig,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub indices: Option<Vec<String>>,
    pub total_variance: Option<f64>,
    pub dispersion_threshold: f64,
    pub out: Option<PathBuf>,
}

fn default_labels(p: usize) -> Vec<IndexLabel> {
    let mut v: Vec<IndexLabel> = (0..p).map(IndexLabel::First).collect();
    if p <= 4 {
        for i in 0..p {
            for j in i + 1..p {
                v.push(IndexLabel::Second(i, j));
            }
        }
    }
    v.push(IndexLabel::TotalUncontrollable);
    v
}

pub fn cmd_sobol(args: &SobolArgs) -> Result<Report> {
    let jm = JointModel::load(&args.model)?;
    let named = parse_dists(&args.dists)?;
    let names: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let dists = named.iter().map(|(_, d)| *d).collect();
    for c in jm.input_columns() {
        if !names.contains(&c) {
            return Err(Error::Schema(format!("model input `{c}` has no distribution")));
        }
    }
    let labels = match &args.indices {
        Some(list) => list.iter().map(|s| IndexLabel::parse(s.trim(), names.len())).collect::<Result<Vec<_>>>()?,
        None => default_labels(names.len()),
    };
    let settings = JointAnalysis {
        labels,
        n: args.n,
        replicates: args.reps,
        seed: args.seed,
        dispersion_threshold: args.dispersion_threshold,
    };
    let estimates = match args.total_variance {
        None => analyse_joint(&jm, dists, names.clone(), &settings)?,
        Some(v) => {
            let pb = jointsa::SaProblem::from_joint(&jm, dists, names.clone())?
                .with_total_variance(TotalVarianceMode::Data(v));
            jointsa::sobol::replicate_indices(&pb, &settings.labels, settings.n, settings.replicates, settings.seed)?
        }
    };
    let mut r = Report::new(format!("Sobol indices of {}", args.model.display()), args.seed);
    for e in &estimates {
        r.push_estimate("sobol", jm.engine().name(), e);
    }
    r.notes.push(format!("inputs: {}", names.join(", ")));
    r.notes.push(format!("N = {}, replicates = {}", args.n, args.reps));
    if let Some(dir) = &args.out {
        r.write(dir, "sobol")?;
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchName {
    Table1,
    Table2,
    Table3,
    Convergence,
    Figure3,
}

impl BenchName {
    pub fn stem(self) -> &'static str {
        match self {
            BenchName::Table1 => "table1",
            BenchName::Table2 => "table2",
            BenchName::Table3 => "table3",
            BenchName::Convergence => "convergence",
            BenchName::Figure3 => "figure3",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub which: BenchName,
    pub seed: u64,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub out: PathBuf,
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Report> {
    let report = match args.which {
        BenchName::Convergence => {
            let mut s = ConvergenceSettings::default();
            if let Some(r) = args.reps {
                s.replicates = r;
            }
            let cells = ishigami::convergence_study(&s, args.seed)?;
            ishigami::convergence_report(&cells, args.seed)
        }
        which => {
            let mut s = BenchSettings::default();
            if let Some(n) = args.n {
                s.n_sobol = n;
            }
            if let Some(r) = args.reps {
                s.replicates = r;
            }
            let bench = IshigamiBench::new(args.seed, s)?;
            match which {
                BenchName::Table1 => ishigami::table1(&bench)?,
                BenchName::Table2 => ishigami::table2(&bench)?,
                BenchName::Table3 => ishigami::table3(&bench)?,
                _ => ishigami::component_curves(&bench, 101, &["joint_glm", "joint_gam", "joint_gp"])?,
            }
        }
    };
    report.write(&args.out, args.which.stem())?;
    if matches!(args.which, BenchName::Table1 | BenchName::Table2 | BenchName::Table3) {
        let stem = args.which.stem();
        write_atomic(&args.out.join(format!("{stem}_wide.csv")), report.to_wide_csv(stem)?.as_bytes())?;
    }
    Ok(report)
}

/// Exit status for an error: 2 for configuration and input problems, 1
/// for numerical and fit failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        e if e.is_configuration() => 2,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}
