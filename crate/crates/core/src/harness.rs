//! Predefined experiments, error norms on the cut domain, and convergence
//! reports.

use std::fmt::{self, Write as _};
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use crate::assembly::{
    assemble_a, assemble_s, assemble_w_upwind, homogenize_rhs, reduce, BoundaryCondition, FormParams,
    GhostScaling, ProblemData, ScalarField, SpaceKind, Stabilisation, VectorField,
};
use crate::basis::{eval, eval_basis_into, BasisValues, DgSpace};
use crate::cutgeom::{classify, CircleObstacle, CutMesh, CutTopology, LevelSet, Ring};
use crate::embedding::{
    aggregated_particular_solution, aggregated_trefftz_embedding, aggregation_embedding, particular_solution,
    trefftz_embedding, weak_particular_solution, weak_trefftz_embedding, ConstraintDomain, EmbeddingMap,
};
use crate::error::{Error, Result};
use crate::linalg::{solve_bicgstab, solve_cg, solve_direct, BlockSparseMatrix, SolverOptions};
use crate::mesh::{BackgroundMesh, Point, Rectangle};
use crate::patches::build_patches;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseName {
    /// Ring, harmonic solution `eˣ sin y`.
    Example1,
    /// Ring, `u = 20(1/4 − r)(r − 3/4)` with a source term.
    Example3,
    /// Convection–diffusion around a circular obstacle.
    Example4,
    /// Ring, global harmonic polynomial.
    PatchTest,
}

impl CaseName {
    pub const ALL: [CaseName; 4] = [CaseName::Example1, CaseName::Example3, CaseName::Example4, CaseName::PatchTest];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::Example1 => "example1",
            CaseName::Example3 => "example3",
            CaseName::Example4 => "example4",
            CaseName::PatchTest => "patch-test",
        }
    }
}

impl fmt::Display for CaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown case '{s}'")))
    }
}

/// Exact solution with its gradient.
pub struct ExactSolution {
    pub value: Box<ScalarField>,
    pub gradient: Box<VectorField>,
}

/// Geometry, data and defaults of one experiment.
pub struct CaseDefinition {
    pub name: CaseName,
    pub domain: Rectangle,
    pub levelset: Box<dyn LevelSet>,
    pub exact: Option<ExactSolution>,
    pub alpha: f64,
    pub default_gamma: GhostScaling,
    /// Subdivisions per axis of the coarsest mesh.
    pub base_n: usize,
    pub default_k: usize,
    pub default_levels: usize,
    problem: fn() -> ProblemData,
}

fn ring_harmonic() -> ProblemData {
    ProblemData::poisson(|_| 0.0, |x| x[0].exp() * x[1].sin())
}

fn example3_u(x: Point) -> f64 {
    let r = x[0].hypot(x[1]);
    20.0 * (0.25 - r) * (r - 0.75)
}

fn example3_problem() -> ProblemData {
    ProblemData::poisson(|x| 80.0 - 20.0 / x[0].hypot(x[1]), example3_u)
}

/// Potential flow around the obstacle of radius `R = 1/4`.
pub fn obstacle_flow(x: Point) -> Point {
    let r2 = 0.0625;
    let rho2 = x[0] * x[0] + x[1] * x[1];
    let rho4 = rho2 * rho2;
    [1.0 + r2 * (x[1] * x[1] - x[0] * x[0]) / rho4, -2.0 * r2 * x[0] * x[1] / rho4]
}

fn example4_problem() -> ProblemData {
    ProblemData {
        source: Box::new(|_| 0.0),
        // u = 1 on the obstacle, u = 0 on the inflow side x = −1.
        dirichlet: Box::new(|x| if x[0].hypot(x[1]) < 0.5 { 1.0 } else { 0.0 }),
        outer_boundary: Box::new(|x| {
            if x[0] <= -1.0 + 1e-12 {
                BoundaryCondition::Dirichlet
            } else {
                BoundaryCondition::Neumann
            }
        }),
        velocity: Some(Box::new(obstacle_flow)),
    }
}

fn patch_problem_quadratic() -> ProblemData {
    ProblemData::poisson(|_| 0.0, |x| x[0] * x[0] - x[1] * x[1])
}

fn patch_problem_cubic() -> ProblemData {
    ProblemData::poisson(|_| 0.0, |x| x[0].powi(3) - 3.0 * x[0] * x[1] * x[1])
}

impl CaseDefinition {
    pub fn new(name: CaseName) -> Self {
        match name {
            CaseName::Example1 => Self::example1(),
            CaseName::Example3 => Self::example3(),
            CaseName::Example4 => Self::example4(),
            CaseName::PatchTest => Self::patch_test(2),
        }
    }

    fn ring(name: CaseName, exact: ExactSolution, problem: fn() -> ProblemData, default_k: usize) -> Self {
        Self {
            name,
            domain: Rectangle::centred_square(1.0),
            levelset: Box::new(Ring::default()),
            exact: Some(exact),
            alpha: 1.0,
            default_gamma: GhostScaling::Constant(0.01),
            base_n: 8,
            default_k,
            default_levels: 4,
            problem,
        }
    }

    pub fn example1() -> Self {
        Self::ring(
            CaseName::Example1,
            ExactSolution {
                value: Box::new(|x| x[0].exp() * x[1].sin()),
                gradient: Box::new(|x| [x[0].exp() * x[1].sin(), x[0].exp() * x[1].cos()]),
            },
            ring_harmonic,
            3,
        )
    }

    pub fn example3() -> Self {
        Self::ring(
            CaseName::Example3,
            ExactSolution {
                value: Box::new(example3_u),
                gradient: Box::new(|x| {
                    let r = x[0].hypot(x[1]);
                    let du = 20.0 * (1.0 - 2.0 * r);
                    [du * x[0] / r, du * x[1] / r]
                }),
            },
            example3_problem,
            2,
        )
    }

    pub fn example4() -> Self {
        Self {
            name: CaseName::Example4,
            domain: Rectangle::centred_square(1.0),
            levelset: Box::new(CircleObstacle::default()),
            exact: None,
            alpha: 1e-3,
            default_gamma: GhostScaling::Convective { gamma0: 0.001, cw: 2.0 },
            base_n: 16,
            default_k: 4,
            default_levels: 2,
            problem: example4_problem,
        }
    }

    /// Global harmonic polynomial `x² − y²` (degree 2) or `x³ − 3xy²` (degree 3).
    pub fn patch_test(degree: usize) -> Self {
        let (exact, problem): (ExactSolution, fn() -> ProblemData) = if degree == 3 {
            (
                ExactSolution {
                    value: Box::new(|x| x[0].powi(3) - 3.0 * x[0] * x[1] * x[1]),
                    gradient: Box::new(|x| [3.0 * x[0] * x[0] - 3.0 * x[1] * x[1], -6.0 * x[0] * x[1]]),
                },
                patch_problem_cubic,
            )
        } else {
            (
                ExactSolution {
                    value: Box::new(|x| x[0] * x[0] - x[1] * x[1]),
                    gradient: Box::new(|x| [2.0 * x[0], -2.0 * x[1]]),
                },
                patch_problem_quadratic,
            )
        };
        let mut case = Self::ring(CaseName::PatchTest, exact, problem, degree.max(2));
        case.default_levels = 1;
        case
    }

    pub fn problem(&self) -> ProblemData {
        (self.problem)()
    }

    pub fn mesh(&self, n: usize) -> Result<BackgroundMesh> {
        BackgroundMesh::structured(self.domain, n)
    }
}

/// Method and discretisation settings for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub space: SpaceKind,
    pub stab: Stabilisation,
    pub k: usize,
    pub levels: usize,
    /// Coarsest subdivision count; the case default when `None`.
    pub base_n: Option<usize>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub quad_order: Option<usize>,
    pub constraint_domain: ConstraintDomain,
    pub solver_kind: SolverKind,
    /// Tolerances of the iterative solvers.
    pub solver: SolverOptions,
    /// Record wall times; when off, `seconds` is reported as 0.
    pub timing: bool,
}

impl RunOptions {
    pub fn new(space: SpaceKind, stab: Stabilisation, k: usize, levels: usize) -> Self {
        Self {
            space,
            stab,
            k,
            levels,
            base_n: None,
            beta: None,
            gamma: None,
            quad_order: None,
            constraint_domain: ConstraintDomain::FullElement,
            solver_kind: SolverKind::Direct,
            solver: SolverOptions {
                tol: 1e-12,
                max_iter: 100_000,
            },
            timing: true,
        }
    }

    pub fn params(&self, case: &CaseDefinition) -> FormParams {
        let mut p = FormParams::new(self.k);
        p.alpha = case.alpha;
        p.gamma = case.default_gamma;
        if let Some(b) = self.beta {
            p.beta = b;
        }
        if let Some(g) = self.gamma {
            p.gamma = GhostScaling::Constant(g);
        }
        if let Some(q) = self.quad_order {
            p.quad_order = q;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > crate::basis::MAX_DEGREE {
            return Err(Error::invalid(format!(
                "k = {} exceeds the maximum degree {}",
                self.k,
                crate::basis::MAX_DEGREE
            )));
        }
        if self.levels == 0 {
            return Err(Error::invalid("at least one refinement level is required"));
        }
        if self.stab == Stabilisation::Ag && self.gamma.is_some_and(|g| g != 0.0) {
            return Err(Error::invalid("aggregation has no ghost penalty in the system; gamma must not be set"));
        }
        Ok(())
    }
}

/// Numerical solution on one mesh, with the data needed to post-process it.
pub struct LevelSolution {
    pub n: usize,
    pub mesh: BackgroundMesh,
    pub topology: CutTopology,
    pub k: usize,
    pub coeffs: Vec<f64>,
    pub dofs: usize,
    pub reduced_dofs: usize,
    pub iterations: usize,
    pub seconds: f64,
}

impl LevelSolution {
    pub fn space(&self) -> DgSpace {
        DgSpace::new(&self.mesh, &self.topology, self.k)
    }

    pub fn cut_mesh(&self) -> CutMesh<'_> {
        CutMesh::new(&self.mesh, &self.topology)
    }

    pub fn h(&self) -> f64 {
        self.mesh.max_diameter()
    }

    /// Smallest and largest value of `u_h` over the volume quadrature points.
    pub fn value_range(&self, order: usize) -> Result<(f64, f64)> {
        let cut = self.cut_mesh();
        let space = self.space();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in 0..space.num_elements() {
            let rule = cut.volume_rule(space.element(a), order)?;
            for &x in &rule.points {
                let v = eval(space.frame(a), self.k, &self.coeffs[space.dof_range(a)], x).0;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        Ok((lo, hi))
    }
}

/// Linear solver for the (reduced) system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SolverKind {
    /// Sparse LU; also handles indefinite systems.
    #[default]
    Direct,
    /// Block-Jacobi preconditioned CG, or BiCGStab when convection is present.
    Iterative,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Direct => "direct",
            SolverKind::Iterative => "iterative",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(SolverKind::Direct),
            "iterative" => Ok(SolverKind::Iterative),
            _ => Err(Error::invalid(format!("unknown solver '{s}'"))),
        }
    }
}

fn solve_blocks(
    matrix: &BlockSparseMatrix,
    rhs: &[f64],
    symmetric: bool,
    kind: SolverKind,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize)> {
    let csr = matrix.to_csr();
    let sol = match kind {
        SolverKind::Direct => solve_direct(&csr, rhs)?,
        SolverKind::Iterative => {
            let pc = matrix.block_jacobi()?;
            if symmetric {
                solve_cg(&csr, rhs, *opts, &pc)?
            } else {
                solve_bicgstab(&csr, rhs, *opts, &pc)?
            }
        }
    };
    Ok((sol.x, sol.iterations))
}

/// Geometry → patches → embedding → assembly → reduction → solve on the mesh with `n` subdivisions.
/// Assembled, reduced system on one mesh together with what is needed to
/// recover the DG coefficients.
pub struct LevelSystem {
    pub n: usize,
    pub mesh: BackgroundMesh,
    pub topology: CutTopology,
    pub k: usize,
    /// System matrix in the reduced basis (the DG basis without embedding).
    pub matrix: BlockSparseMatrix,
    pub rhs: Vec<f64>,
    pub embedding: Option<EmbeddingMap>,
    /// Particular solution added after prolongation.
    pub offset: Vec<f64>,
    pub symmetric: bool,
}

impl LevelSystem {
    pub fn dofs(&self) -> usize {
        self.offset.len()
    }

    pub fn reduced_dofs(&self) -> usize {
        self.rhs.len()
    }

    /// DG coefficients `T x + u_f` of a reduced solution `x`.
    pub fn prolongate(&self, x: &[f64]) -> Vec<f64> {
        let mut u = match &self.embedding {
            Some(t) => t.apply(x),
            None => x.to_vec(),
        };
        for (ui, fi) in u.iter_mut().zip(&self.offset) {
            *ui += fi;
        }
        u
    }
}

/// Geometry → patches → embedding → assembly → reduction on the mesh with `n` subdivisions.
pub fn assemble_level(case: &CaseDefinition, opts: &RunOptions, n: usize) -> Result<LevelSystem> {
    opts.validate()?;
    let mesh = case.mesh(n)?;
    let topology = classify(&mesh, case.levelset.as_ref())?;
    let cut = CutMesh::new(&mesh, &topology);
    let patches = build_patches(&cut)?;
    let space = DgSpace::new(&mesh, &topology, opts.k);
    let params = opts.params(case);
    let data = case.problem();
    let velocity = data.velocity.as_deref();
    if velocity.is_some() && opts.space == SpaceKind::Trefftz && opts.stab == Stabilisation::Ag {
        return Err(Error::invalid("aggregated weak Trefftz spaces are not supported"));
    }

    let mut system = assemble_a(&cut, &space, &params, &data)?;
    if velocity.is_some() {
        system.add(&assemble_w_upwind(&cut, &space, &params, &data)?);
    }
    match opts.stab {
        Stabilisation::Gp => system.add_matrix(&assemble_s(&cut, &space, &params, patches.gp_star())?),
        Stabilisation::Wgp => system.add_matrix(&assemble_s(&cut, &space, &params, patches.gp_min())?),
        Stabilisation::Ag => {}
    }

    let embedding = match (opts.space, opts.stab, velocity) {
        (SpaceKind::Dg, Stabilisation::Gp | Stabilisation::Wgp, _) => None,
        (SpaceKind::Dg, Stabilisation::Ag, _) => Some(aggregation_embedding(&cut, &space, &patches)?),
        (SpaceKind::Trefftz, Stabilisation::Gp | Stabilisation::Wgp, None) => Some(trefftz_embedding(&space)?),
        (SpaceKind::Trefftz, Stabilisation::Gp | Stabilisation::Wgp, Some(w)) => {
            Some(weak_trefftz_embedding(&cut, &space, params.alpha, w, opts.constraint_domain)?)
        }
        (SpaceKind::Trefftz, Stabilisation::Ag, _) => Some(aggregated_trefftz_embedding(&cut, &space, &patches)?),
    };

    let domain = opts.constraint_domain;
    let offset = match (opts.space, velocity) {
        (SpaceKind::Dg, _) => vec![0.0; space.ndofs()],
        (SpaceKind::Trefftz, Some(w)) => weak_particular_solution(&cut, &space, params.alpha, w, &data.source, domain)?,
        (SpaceKind::Trefftz, None) => {
            let (alpha, source) = (params.alpha, &data.source);
            let s = move |x: Point| -source(x) / alpha;
            if opts.stab == Stabilisation::Ag {
                aggregated_particular_solution(&cut, &space, &patches, &s, domain)?
            } else {
                particular_solution(&cut, &space, &s, domain)?
            }
        }
    };

    let (matrix, rhs) = match &embedding {
        None => (system.matrix, system.rhs),
        Some(t) => (reduce(&system.matrix, t)?, homogenize_rhs(&system.matrix, &system.rhs, t, &offset)?),
    };
    Ok(LevelSystem {
        n,
        mesh,
        topology,
        k: opts.k,
        matrix,
        rhs,
        embedding,
        offset,
        symmetric: velocity.is_none(),
    })
}

/// Assemble and solve on the mesh with `n` subdivisions.
pub fn solve_level(case: &CaseDefinition, opts: &RunOptions, n: usize) -> Result<LevelSolution> {
    let start = Instant::now();
    let system = assemble_level(case, opts, n)?;
    let (x, iterations) = solve_blocks(&system.matrix, &system.rhs, system.symmetric, opts.solver_kind, &opts.solver)?;
    let coeffs = system.prolongate(&x);
    let seconds = if opts.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let (dofs, reduced_dofs) = (system.dofs(), system.reduced_dofs());
    Ok(LevelSolution {
        n,
        mesh: system.mesh,
        topology: system.topology,
        k: opts.k,
        coeffs,
        dofs,
        reduced_dofs,
        iterations,
        seconds,
    })
}

/// `(‖u − u_h‖_{L²(Ω_h)}, |u − u_h|_{H¹(Ω_h)})` by cut-volume quadrature.
pub fn compute_errors(
    cut: &CutMesh<'_>,
    space: &DgSpace,
    coeffs: &[f64],
    exact: &ExactSolution,
    order: usize,
) -> Result<(f64, f64)> {
    if coeffs.len() != space.ndofs() {
        return Err(Error::DimensionMismatch {
            expected: space.ndofs(),
            found: coeffs.len(),
        });
    }
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut phi = BasisValues::default();
    for a in 0..space.num_elements() {
        let rule = cut.volume_rule(space.element(a), order)?;
        let c = &coeffs[space.dof_range(a)];
        for (&x, &w) in rule.points.iter().zip(&rule.weights) {
            eval_basis_into(space.frame(a), space.k, x, &mut phi);
            let mut v = 0.0;
            let mut g = [0.0, 0.0];
            for (j, &cj) in c.iter().enumerate() {
                v += cj * phi.values[j];
                g[0] += cj * phi.gradients[j][0];
                g[1] += cj * phi.gradients[j][1];
            }
            let ge = (exact.gradient)(x);
            l2 += w * ((exact.value)(x) - v).powi(2);
            h1 += w * ((ge[0] - g[0]).powi(2) + (ge[1] - g[1]).powi(2));
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

/// `‖u_a − u_b‖_{L²(Ω_h)}` for two coefficient vectors on the same space.
pub fn l2_difference(cut: &CutMesh<'_>, space: &DgSpace, a: &[f64], b: &[f64], order: usize) -> Result<f64> {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let zero = ExactSolution {
        value: Box::new(|_| 0.0),
        gradient: Box::new(|_| [0.0, 0.0]),
    };
    Ok(compute_errors(cut, space, &diff, &zero, order)?.0)
}

/// Estimated order of convergence between two consecutive levels.
pub fn eoc(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// One line of a convergence report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub case: CaseName,
    pub space: SpaceKind,
    pub stab: Stabilisation,
    pub k: usize,
    pub level: usize,
    pub h: f64,
    pub dofs: usize,
    pub reduced_dofs: usize,
    /// `NaN` when the case has no exact solution.
    pub l2: f64,
    pub eoc_l2: Option<f64>,
    pub h1: f64,
    pub eoc_h1: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "case,space,stab,k,level,h,dofs,reduced_dofs,l2,eoc_l2,h1,eoc_h1,iters,seconds";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

fn fmt_err(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6e}")
    }
}

impl ErrorReport {
    pub fn push(&mut self, mut row: ReportRow) {
        if let Some(prev) = self.rows.last() {
            let same_series = prev.case == row.case && prev.space == row.space && prev.stab == row.stab && prev.k == row.k;
            if same_series && row.level == prev.level + 1 {
                let e = |a: f64, b: f64| {
                    let r = eoc(a, b, prev.h, row.h);
                    r.is_finite().then_some(r)
                };
                row.eoc_l2 = e(prev.l2, row.l2);
                row.eoc_h1 = e(prev.h1, row.h1);
            }
        }
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ErrorReport) {
        for row in other.rows {
            self.rows.push(row);
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "{CSV_HEADER}")?;
        }
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:.6e},{},{},{},{},{},{},{},{:.3}",
                r.case,
                r.space,
                r.stab,
                r.k,
                r.level,
                r.h,
                r.dofs,
                r.reduced_dofs,
                fmt_err(r.l2),
                fmt_opt(r.eoc_l2),
                fmt_err(r.h1),
                fmt_opt(r.eoc_h1),
                r.iterations,
                r.seconds
            )?;
        }
        Ok(())
    }

    /// Aligned text table: h, N, M, L2, EOC, H1, EOC.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>3} {:>10} {:>8} {:>8} {:>11} {:>6} {:>11} {:>6} {:>6}",
            "case", "space", "k", "h", "N", "M", "L2", "EOC", "H1", "EOC", "iters"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>7} {:>3} {:>10.4e} {:>8} {:>8} {:>11} {:>6} {:>11} {:>6} {:>6}",
                r.case.as_str(),
                format!("{}/{}", r.space, r.stab),
                r.k,
                r.h,
                r.dofs,
                r.reduced_dofs,
                if r.l2.is_nan() { "-".to_string() } else { format!("{:.3e}", r.l2) },
                r.eoc_l2.map_or("-".to_string(), |v| format!("{v:.2}")),
                if r.h1.is_nan() { "-".to_string() } else { format!("{:.3e}", r.h1) },
                r.eoc_h1.map_or("-".to_string(), |v| format!("{v:.2}")),
                r.iterations
            );
        }
        s
    }
}

/// Run `opts.levels` uniformly refined meshes starting from `base_n`.
pub fn run_case(case: &CaseDefinition, opts: &RunOptions) -> Result<ErrorReport> {
    opts.validate()?;
    let base = opts.base_n.unwrap_or(case.base_n);
    let mut report = ErrorReport::default();
    for level in 0..opts.levels {
        let n = base << level;
        let ctx = |e: Error| Error::Run {
            case: case.name.to_string(),
            level,
            source: Box::new(e),
        };
        let sol = solve_level(case, opts, n).map_err(ctx)?;
        let order = opts.quad_order.unwrap_or(2 * opts.k + 2);
        let (l2, h1) = match &case.exact {
            Some(exact) => compute_errors(&sol.cut_mesh(), &sol.space(), &sol.coeffs, exact, order).map_err(ctx)?,
            None => (f64::NAN, f64::NAN),
        };
        report.push(ReportRow {
            case: case.name,
            space: opts.space,
            stab: opts.stab,
            k: opts.k,
            level,
            h: sol.h(),
            dofs: sol.dofs,
            reduced_dofs: sol.reduced_dofs,
            l2,
            eoc_l2: None,
            h1,
            eoc_h1: None,
            iterations: sol.iterations,
            seconds: sol.seconds,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(level: usize, h: f64, l2: f64) -> ReportRow {
        ReportRow {
            case: CaseName::Example1,
            space: SpaceKind::Dg,
            stab: Stabilisation::Gp,
            k: 1,
            level,
            h,
            dofs: 0,
            reduced_dofs: 0,
            l2,
            eoc_l2: None,
            h1: l2,
            eoc_h1: None,
            iterations: 0,
            seconds: 0.0,
        }
    }

    #[test]
    fn eoc_of_synthetic_sequences() {
        let mut r = ErrorReport::default();
        r.push(row(0, 0.5, 1.0));
        r.push(row(1, 0.25, 1.0));
        assert_eq!(r.rows[1].eoc_l2, Some(0.0));
        let mut r = ErrorReport::default();
        r.push(row(0, 0.5, 1.0));
        r.push(row(1, 0.25, 0.5));
        r.push(row(2, 0.125, 0.125));
        assert!((r.rows[1].eoc_l2.unwrap() - 1.0).abs() < 1e-14);
        assert!((r.rows[2].eoc_l2.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(r.rows[0].eoc_l2, None);
    }

    #[test]
    fn case_names_round_trip() {
        for c in CaseName::ALL {
            assert_eq!(c.as_str().parse::<CaseName>().unwrap(), c);
        }
        assert!("example2".parse::<CaseName>().is_err());
    }

    #[test]
    fn zero_solution_error_is_domain_area() {
        let case = CaseDefinition::example1();
        let one = ExactSolution {
            value: Box::new(|_| 1.0),
            gradient: Box::new(|_| [0.0, 0.0]),
        };
        let mut prev = f64::INFINITY;
        for n in [16, 32, 64] {
            let mesh = case.mesh(n).unwrap();
            let topo = classify(&mesh, case.levelset.as_ref()).unwrap();
            let cut = CutMesh::new(&mesh, &topo);
            let space = DgSpace::new(&mesh, &topo, 1);
            let (l2, h1) = compute_errors(&cut, &space, &vec![0.0; space.ndofs()], &one, 2).unwrap();
            let err = (l2 * l2 - std::f64::consts::FRAC_PI_2).abs();
            assert!(err < prev && err < 0.05);
            assert_eq!(h1, 0.0);
            prev = err;
        }
    }

    #[test]
    fn patch_test_is_exact_for_every_variant() {
        let case = CaseDefinition::patch_test(2);
        for space in [SpaceKind::Dg, SpaceKind::Trefftz] {
            for stab in [Stabilisation::Gp, Stabilisation::Wgp, Stabilisation::Ag] {
                let opts = RunOptions::new(space, stab, 2, 1);
                let r = run_case(&case, &opts).unwrap();
                assert!(r.rows[0].l2 < 1e-8, "{space}/{stab}: {:e}", r.rows[0].l2);
            }
        }
    }

    #[test]
    fn aggregation_with_gamma_is_rejected() {
        let mut opts = RunOptions::new(SpaceKind::Dg, Stabilisation::Ag, 2, 1);
        opts.gamma = Some(0.5);
        assert!(opts.validate().is_err());
        opts.gamma = Some(0.0);
        assert!(opts.validate().is_ok());
    }

    #[test]
    fn errors_carry_run_context() {
        let mut opts = RunOptions::new(SpaceKind::Dg, Stabilisation::Gp, 2, 1);
        opts.solver_kind = SolverKind::Iterative;
        opts.solver.max_iter = 1;
        let err = run_case(&CaseDefinition::example1(), &opts).unwrap_err();
        match err {
            Error::Run { case, level, source } => {
                assert_eq!(case, "example1");
                assert_eq!(level, 0);
                assert!(matches!(*source, Error::NonConvergence { .. }));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn csv_layout() {
        let mut r = ErrorReport::default();
        r.push(row(0, 0.5, 1.0));
        r.push(row(1, 0.25, 0.5));
        let mut buf = Vec::new();
        r.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 14));
        assert!(lines[2].contains(",1.0000,"));
    }
}
