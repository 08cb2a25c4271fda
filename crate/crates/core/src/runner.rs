//! Experiment driver: configuration, per-level solves and CSV output.
//!
//! A run writes into its output directory:
//!
//! * `errors.csv`: one row per level (see [`ErrorReport::write_csv`]),
//! * `newton_<level>.csv`: Newton history per level of an HJB run,
//! * `meshinfo.csv`: `level,triangles,vertices,ndof`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::analysis::{error_norms, mt_identity_terms, ErrorReport, ErrorRow, OrderBasis};
use crate::error::Error;
use crate::fespace::HermiteSpace;
use crate::geometry::Sym2;
use crate::mesh::io::write_mesh;
use crate::mesh::{graded_mesh_sequence, uniform_rect_mesh, Mesh};
use crate::problems::{
    constant_coefficient_problem, cordes_epsilon_lower_order, cordes_epsilon_nondiv, problem_by_name, Coeffs, Domain,
    NondivProblem, Problem,
};
use crate::solvers::{semismooth_newton, solve_nondiv_with, NewtonHistory, NewtonStatus};

pub const DEFAULT_TOL: f64 = 1e-8;
/// Newton tolerance for the graded exp4 runs, whose finest levels
/// stagnate in roundoff around 5e-8.
pub const EXP4_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 30;
pub const DEFAULT_GRADING: f64 = 120.0;

/// Mesh sequence of a run.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Levels {
    /// Uniform `n × n` meshes of the problem domain.
    Uniform(Vec<usize>),
    /// Graded bisection meshes of the unit square.
    Graded {
        graded: usize,
        #[serde(default = "default_grading")]
        c: f64,
    },
}

fn default_grading() -> f64 {
    DEFAULT_GRADING
}

impl FromStr for Levels {
    type Err = Error;

    /// `4,8,16` for uniform meshes, `graded:<count>[:<C>]` for graded ones.
    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("graded:") {
            let mut parts = rest.split(':');
            let count = parts
                .next()
                .and_then(|p| p.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("bad graded level count in `{s}`")))?;
            let c = match parts.next() {
                Some(p) => p.trim().parse().map_err(|_| Error::Config(format!("bad grading constant in `{s}`")))?,
                None => DEFAULT_GRADING,
            };
            if parts.next().is_some() {
                return Err(Error::Config(format!("too many fields in `{s}`")));
            }
            return Ok(Levels::Graded { graded: count, c });
        }
        let ns = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad mesh size `{p}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Levels::Uniform(ns))
    }
}

/// Constant-coefficient problem with a manufactured sine solution.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    /// `[xmin, xmax, ymin, ymax]`, default the unit square.
    #[serde(default = "unit_square")]
    pub domain: [f64; 4],
    /// `[a11, a12, a22]`
    pub a: [f64; 3],
    #[serde(default)]
    pub b: [f64; 2],
    #[serde(default)]
    pub c: f64,
    /// Defaults to the largest admissible Cordes constant.
    pub epsilon: Option<f64>,
    /// Required when `b` or `c` is nonzero.
    #[serde(default)]
    pub lambda: f64,
}

fn unit_square() -> [f64; 4] {
    [0.0, 1.0, 0.0, 1.0]
}

/// Declarative run description; every field can be overridden from the
/// command line.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default = "default_degree")]
    pub degree: usize,
    pub levels: Option<Levels>,
    /// Newton increment tolerance; see [`RunConfig::resolved_tol`].
    pub tol: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Replaces ε in the face coefficient of linear problems.
    pub eps_tilde: Option<f64>,
    #[serde(default)]
    pub save_meshes: bool,
    pub custom: Option<CustomProblem>,
}

fn default_degree() -> usize {
    3
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl RunConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            degree: default_degree(),
            levels: None,
            tol: None,
            max_iter: DEFAULT_MAX_ITER,
            out: default_out(),
            eps_tilde: None,
            save_meshes: false,
            custom: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, Error> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Levels of the run, falling back to the experiment default.
    pub fn resolved_levels(&self) -> Levels {
        self.levels.clone().unwrap_or_else(|| match self.experiment.as_str() {
            "exp3" => Levels::Uniform(vec![2, 4, 8, 16]),
            "exp4" => Levels::Graded { graded: 14, c: DEFAULT_GRADING },
            _ => Levels::Uniform(vec![4, 8, 16, 32]),
        })
    }

    /// Newton tolerance of the run, falling back to the experiment default.
    pub fn resolved_tol(&self) -> f64 {
        self.tol.unwrap_or(if self.experiment == "exp4" { EXP4_TOL } else { DEFAULT_TOL })
    }

    /// Builds the problem and checks every setting against it.
    pub fn validate(&self) -> Result<Problem, Error> {
        if !matches!(self.degree, 3 | 4) {
            return Err(Error::Config(format!("degree must be 3 or 4, got {}", self.degree)));
        }
        let tol = self.resolved_tol();
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {tol}")));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        let problem = match (self.experiment.as_str(), &self.custom) {
            ("custom", Some(c)) => Problem::Nondiv(build_custom(c)?),
            ("custom", None) => return Err(Error::Config("experiment `custom` needs a [custom] table".into())),
            (name, Some(_)) => return Err(Error::Config(format!("[custom] given for built-in experiment `{name}`"))),
            (name, None) => problem_by_name(name).map_err(|_| {
                Error::Config(format!("unknown experiment `{name}` (expected exp1, exp2, exp3, exp4 or custom)"))
            })?,
        };
        if let Some(e) = self.eps_tilde {
            let Problem::Nondiv(p) = &problem else {
                return Err(Error::Config("eps_tilde applies to linear problems only".into()));
            };
            if !(0.0..=p.epsilon).contains(&e) {
                return Err(Error::Config(format!("eps_tilde must lie in [0, {}], got {e}", p.epsilon)));
            }
        }
        match self.resolved_levels() {
            Levels::Uniform(ns) => {
                if ns.is_empty() || ns.contains(&0) {
                    return Err(Error::Config("uniform levels must be a nonempty list of positive sizes".into()));
                }
                if let Problem::Nondiv(p) = &problem {
                    if p.jump_lines.is_some() && ns.iter().any(|n| n % 2 != 0) {
                        return Err(Error::Config(format!("{} needs even mesh sizes", p.name)));
                    }
                }
            }
            Levels::Graded { graded, c } => {
                if graded == 0 || !(c > 0.0 && c.is_finite()) {
                    return Err(Error::Config("graded levels need a positive count and constant".into()));
                }
                if problem.domain() != Domain::UNIT {
                    return Err(Error::Config("graded meshes are defined on the unit square only".into()));
                }
            }
        }
        Ok(problem)
    }
}

fn build_custom(c: &CustomProblem) -> Result<NondivProblem, Error> {
    let [xmin, xmax, ymin, ymax] = c.domain;
    if !(xmin < xmax && ymin < ymax) || c.domain.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("invalid domain {:?}", c.domain)));
    }
    let domain = Domain { xmin, xmax, ymin, ymax };
    let a = Sym2::new(c.a[0], c.a[1], c.a[2]);
    let lower = c.b != [0.0, 0.0] || c.c != 0.0;
    if lower && !(c.lambda > 0.0) {
        return Err(Error::Config("custom problems with b or c need lambda > 0".into()));
    }
    let lambda = if lower { c.lambda } else { 0.0 };
    let eps = match c.epsilon {
        Some(e) => e,
        None if lower => cordes_epsilon_lower_order(&[Coeffs { a, b: c.b, c: c.c, f: 0.0 }], lambda)?,
        None => cordes_epsilon_nondiv(&[a])?,
    };
    constant_coefficient_problem("custom", domain, a, c.b, c.c, eps, lambda)
}

/// Failure of a run, mapped to the process exit code.
#[derive(Debug)]
pub enum RunError {
    /// Bad configuration; nothing was written.
    Usage(String),
    /// A solve failed or Newton did not reach the tolerance.
    Solver(String),
    /// A built-in consistency check failed.
    Invariant(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Solver(_) => 2,
            RunError::Invariant(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Usage(m) => write!(f, "usage error: {m}"),
            RunError::Solver(m) => write!(f, "solver failure: {m}"),
            RunError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

#[derive(Clone, Debug)]
pub struct LevelResult {
    pub level: usize,
    pub triangles: usize,
    pub vertices: usize,
    pub errors: Option<ErrorRow>,
    pub newton: Option<(NewtonHistory, NewtonStatus)>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub levels: Vec<LevelResult>,
    pub report: Option<ErrorReport>,
}

/// Relative bound on the discrete Miranda-Talenti gap of each solution.
const MT_TOLERANCE: f64 = 1e-9;

/// Runs every level, writing the CSV files as it goes. Configuration errors
/// are reported before the output directory is touched.
pub fn run_experiment(config: &RunConfig) -> Result<RunSummary, RunError> {
    let problem = config.validate().map_err(usage)?;
    let levels = config.resolved_levels();
    let (meshes, basis) = build_meshes(&problem, &levels).map_err(usage)?;
    if let Problem::Nondiv(p) = &problem {
        for (l, m) in meshes.iter().enumerate() {
            p.check_mesh(m).map_err(|e| RunError::Usage(format!("level {l}: {e}")))?;
        }
    }
    let io = |e: std::io::Error| RunError::Solver(format!("writing output: {e}"));
    fs::create_dir_all(&config.out).map_err(io)?;

    let mut results = Vec::new();
    let mut report = problem.exact().map(|_| ErrorReport::new(basis));
    let mut failures = Vec::new();
    let mut violations = Vec::new();
    for (level, mesh) in meshes.iter().enumerate() {
        let area_gap = (mesh.total_area() - domain_area(problem.domain())).abs();
        if area_gap > 1e-12 * domain_area(problem.domain()) {
            violations.push(format!("level {level}: triangle areas miss the domain area by {area_gap:e}"));
        }
        if config.save_meshes {
            fs::write(config.out.join(format!("mesh_{level}.txt")), write_mesh(mesh)).map_err(io)?;
        }
        let space = HermiteSpace::new(mesh, config.degree)
            .map_err(|e| RunError::Solver(format!("level {level}: {e}")))?;
        let solved = match &problem {
            Problem::Nondiv(p) => {
                let eps = config.eps_tilde.unwrap_or(p.epsilon);
                solve_nondiv_with(&space, p, eps).map(|u| (u, None))
            }
            Problem::Hjb(p) => semismooth_newton(&space, p, &vec![0.0; space.ndofs()], config.resolved_tol(), config.max_iter)
                .map(|out| (out.solution, Some((out.history, out.status)))),
        };
        let (u, newton) = match solved {
            Ok(v) => v,
            Err(e) => {
                failures.push(format!("level {level}: {e}"));
                break;
            }
        };
        if let Some((history, status)) = &newton {
            let f = fs::File::create(config.out.join(format!("newton_{level}.csv"))).map_err(io)?;
            history.write_csv(f).map_err(|e| RunError::Solver(e.to_string()))?;
            if *status != NewtonStatus::Converged {
                let last = history.steps.last().map(|s| s.increment_norm).unwrap_or(f64::NAN);
                failures.push(format!(
                    "level {level}: Newton stopped after {} iterations with increment {last:e} (tol {:e})",
                    history.len(),
                    config.resolved_tol()
                ));
            }
        }
        let mt = mt_identity_terms(&space, &u).map_err(|e| RunError::Solver(e.to_string()))?;
        if mt.gap().abs() > MT_TOLERANCE * mt.hessian.max(f64::MIN_POSITIVE) {
            violations.push(format!("level {level}: Miranda-Talenti gap {:e}", mt.gap()));
        }
        let errors = match problem.exact() {
            Some(exact) => Some(
                error_norms(&space, &u, exact.as_ref(), problem.lambda())
                    .map_err(|e| RunError::Solver(e.to_string()))?,
            ),
            None => None,
        };
        if let (Some(r), Some(row)) = (report.as_mut(), errors) {
            r.rows.push(row);
        }
        results.push(LevelResult {
            level,
            triangles: mesh.num_triangles(),
            vertices: mesh.num_vertices(),
            errors,
            newton,
        });
        write_outputs(config, &meshes, &results, report.as_ref())?;
    }
    write_outputs(config, &meshes, &results, report.as_ref())?;
    if !failures.is_empty() {
        return Err(RunError::Solver(failures.join("; ")));
    }
    if !violations.is_empty() {
        return Err(RunError::Invariant(violations.join("; ")));
    }
    Ok(RunSummary { levels: results, report })
}

fn usage(e: Error) -> RunError {
    match e {
        Error::Config(m) => RunError::Usage(m),
        other => RunError::Usage(other.to_string()),
    }
}

fn domain_area(d: Domain) -> f64 {
    (d.xmax - d.xmin) * (d.ymax - d.ymin)
}

fn build_meshes(problem: &Problem, levels: &Levels) -> Result<(Vec<Mesh>, OrderBasis), Error> {
    match levels {
        Levels::Uniform(ns) => {
            let d = problem.domain();
            let meshes = ns
                .iter()
                .map(|&n| uniform_rect_mesh(d.xmin, d.xmax, d.ymin, d.ymax, n))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((meshes, OrderBasis::MeshSize))
        }
        Levels::Graded { graded, c } => Ok((graded_mesh_sequence(*graded, *c)?, OrderBasis::Ndof)),
    }
}

fn write_outputs(
    config: &RunConfig,
    meshes: &[Mesh],
    results: &[LevelResult],
    report: Option<&ErrorReport>,
) -> Result<(), RunError> {
    let err = |e: Error| RunError::Solver(format!("writing output: {e}"));
    if let Some(r) = report {
        let f = fs::File::create(config.out.join("errors.csv")).map_err(|e| err(e.into()))?;
        r.write_csv(f).map_err(err)?;
    }
    let f = fs::File::create(config.out.join("meshinfo.csv")).map_err(|e| err(e.into()))?;
    let mut w = csv::Writer::from_writer(f);
    let row = |w: &mut csv::Writer<fs::File>, fields: [String; 4]| w.write_record(fields).map_err(|e| err(e.into()));
    row(&mut w, ["level", "triangles", "vertices", "ndof"].map(String::from))?;
    for r in results {
        let ndof = HermiteSpace::new(&meshes[r.level], config.degree).map(|s| s.free_count()).map_err(err)?;
        row(&mut w, [r.level.to_string(), r.triangles.to_string(), r.vertices.to_string(), ndof.to_string()])?;
    }
    w.flush().map_err(|e| err(e.into()))?;
    Ok(())
}
