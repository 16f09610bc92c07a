//! Cell-wise Gauss-Legendre assembly of the PUFEM matrices.
//!
//! Every shape function restricted to one overlap cell is a polynomial, so a
//! Gauss rule per cell integrates polynomial coefficients exactly once its
//! order covers the integrand degree.

use super::basis::{Cover, PuBasis};
use crate::closures::DiffusionField;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::poly::Poly;
use crate::quadrature::GaussLegendre;

/// Shape-function tables at the Gauss points of one cell.
#[derive(Debug, Clone)]
struct CellRule {
    dofs: Vec<usize>,
    x: Vec<f64>,
    w: Vec<f64>,
    /// `values[p * dofs.len() + i]`
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl CellRule {
    fn row<'a>(&self, table: &'a [f64], p: usize) -> &'a [f64] {
        let n = self.dofs.len();
        &table[p * n..(p + 1) * n]
    }
}

/// Precomputed quadrature tables for a cover, basis and fixed rule size.
#[derive(Debug, Clone)]
pub struct Assembler {
    cover: Cover,
    basis: PuBasis,
    points: usize,
    first_cell: usize,
    cells: Vec<CellRule>,
}

impl Assembler {
    /// `points` Gauss nodes per cell.
    pub fn new(cover: &Cover, basis: &PuBasis, points: usize) -> Result<Self> {
        Self::with_cells(cover, basis, points, 0..cover.cells())
    }

    /// Integrates over the given range of cells only. Dropping the two outer
    /// cells leaves the region where the PU sums to one, and the weak form
    /// then carries a zero-flux condition at its ends.
    pub fn with_cells(
        cover: &Cover,
        basis: &PuBasis,
        points: usize,
        cells: std::ops::Range<usize>,
    ) -> Result<Self> {
        basis.check_cover(cover)?;
        if cells.is_empty() || cells.end > cover.cells() {
            return Err(crate::error::param("cells", "empty or outside the cover"));
        }
        let first_cell = cells.start;
        let rule = GaussLegendre::new(points.max(1));
        let m = basis.max_size();
        let mut vbuf = vec![0.0; m];
        let mut dbuf = vec![0.0; m];
        let cells = cells
            .map(|c| {
                let (a, b) = cover.cell_bounds(c);
                let subs: Vec<usize> = cover.cell_subdomains(c).collect();
                let dofs: Vec<usize> = subs
                    .iter()
                    .flat_map(|&k| (0..basis.size(k)).map(move |mu| basis.index(k, mu)))
                    .collect();
                let (x, w): (Vec<f64>, Vec<f64>) = rule.mapped(a, b).unzip();
                let mut values = Vec::with_capacity(x.len() * dofs.len());
                let mut derivs = Vec::with_capacity(x.len() * dofs.len());
                for &xp in &x {
                    for &k in &subs {
                        let mk = basis.size(k);
                        basis.local_values(cover, k, xp, &mut vbuf, &mut dbuf);
                        values.extend_from_slice(&vbuf[..mk]);
                        derivs.extend_from_slice(&dbuf[..mk]);
                    }
                }
                CellRule {
                    dofs,
                    x,
                    w,
                    values,
                    derivs,
                }
            })
            .collect();
        Ok(Self {
            cover: cover.clone(),
            basis: basis.clone(),
            points: points.max(1),
            first_cell,
            cells,
        })
    }

    /// Rule exact for integrands of polynomial degree `degree` on each cell.
    pub fn for_degree(cover: &Cover, basis: &PuBasis, degree: usize) -> Result<Self> {
        Self::new(cover, basis, (degree + 2) / 2)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn cover(&self) -> &Cover {
        &self.cover
    }

    pub fn basis(&self) -> &PuBasis {
        &self.basis
    }

    pub fn dofs(&self) -> usize {
        self.basis.total()
    }

    /// Degree of polynomial integrands this rule integrates exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.points - 1
    }

    fn symmetric(&self, entry: impl Fn(&CellRule, usize, usize, usize) -> f64) -> Matrix {
        let mut out = Matrix::zeros(self.dofs());
        for cell in &self.cells {
            let n = cell.dofs.len();
            for i in 0..n {
                for j in i..n {
                    let v: f64 = (0..cell.x.len()).map(|p| entry(cell, p, i, j)).sum();
                    let (gi, gj) = (cell.dofs[i], cell.dofs[j]);
                    out[(gi, gj)] += v;
                    if i != j {
                        out[(gj, gi)] += v;
                    }
                }
            }
        }
        out
    }

    /// `C_jm = int u_m u_j dx`
    pub fn mass(&self) -> Matrix {
        self.symmetric(|c, p, i, j| {
            let v = c.row(&c.values, p);
            c.w[p] * v[i] * v[j]
        })
    }

    /// `S_jm = int u_m' u_j' dx`
    pub fn gram(&self) -> Matrix {
        self.symmetric(|c, p, i, j| {
            let d = c.row(&c.derivs, p);
            c.w[p] * d[i] * d[j]
        })
    }

    /// `A_jm = int a(x) u_m u_j' dx - int b(x) u_m' u_j' dx` where
    /// `coeff(x) = (a(x), b(x))`.
    pub fn stiffness(&self, coeff: impl Fn(f64) -> (f64, f64)) -> Matrix {
        let mut out = Matrix::zeros(self.dofs());
        for cell in &self.cells {
            let n = cell.dofs.len();
            let ab: Vec<(f64, f64)> = cell.x.iter().map(|&x| coeff(x)).collect();
            for j in 0..n {
                for m in 0..n {
                    let mut v = 0.0;
                    for (p, &(a, b)) in ab.iter().enumerate() {
                        let val = cell.row(&cell.values, p);
                        let der = cell.row(&cell.derivs, p);
                        v += cell.w[p] * (a * val[m] * der[j] - b * der[m] * der[j]);
                    }
                    out[(cell.dofs[j], cell.dofs[m])] += v;
                }
            }
        }
        out
    }

    /// Stiffness for drift coefficient `q` and a closure diffusion field.
    pub fn stiffness_for(&self, q: &Poly, field: &DiffusionField) -> Matrix {
        self.stiffness(|x| {
            let (b, db) = field.eval(x);
            (q.eval(x) - db, b)
        })
    }

    /// `f_j = int f(x) u_j(x) dx`
    pub fn load(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dofs()];
        for cell in &self.cells {
            for (p, (&x, &w)) in cell.x.iter().zip(&cell.w).enumerate() {
                let fx = w * f(x);
                for (i, v) in cell.row(&cell.values, p).iter().enumerate() {
                    out[cell.dofs[i]] += fx * v;
                }
            }
        }
        out
    }

    /// Integration interval.
    pub fn bounds(&self) -> (f64, f64) {
        let a = self.cover.cell_bounds(self.first_cell).0;
        let b = self.cover.cell_bounds(self.first_cell + self.cells.len() - 1).1;
        (a, b)
    }

    /// `int g(x, f(x), f'(x)) dx` over the cells selected by `cells`
    /// (indices relative to the first integrated cell).
    pub fn integrate_over(
        &self,
        w: &[f64],
        cells: impl IntoIterator<Item = usize>,
        g: impl Fn(f64, f64, f64) -> f64,
    ) -> f64 {
        let mut acc = 0.0;
        for c in cells {
            let cell = &self.cells[c];
            for p in 0..cell.x.len() {
                let (mut f, mut df) = (0.0, 0.0);
                let vals = cell.row(&cell.values, p);
                let ders = cell.row(&cell.derivs, p);
                for (i, &d) in cell.dofs.iter().enumerate() {
                    f += w[d] * vals[i];
                    df += w[d] * ders[i];
                }
                acc += cell.w[p] * g(cell.x[p], f, df);
            }
        }
        acc
    }

    /// `int g(x, f(x), f'(x)) dx` over the whole domain.
    pub fn integrate(&self, w: &[f64], g: impl Fn(f64, f64, f64) -> f64) -> f64 {
        self.integrate_over(w, 0..self.cells.len(), g)
    }

    /// `int |f| dx` over the first and last integrated cell.
    pub fn boundary_mass(&self, w: &[f64]) -> f64 {
        let last = self.cells.len() - 1;
        let cells = if last == 0 { vec![0] } else { vec![0, last] };
        self.integrate_over(w, cells, |_, f, _| f.abs())
    }
}

/// Degree of a polynomial-coefficient stiffness integrand.
pub fn stiffness_degree(basis: &PuBasis, q_minus_db: usize, b: usize) -> usize {
    let d = basis.shape_degree();
    (q_minus_db + 2 * d).saturating_sub(1).max(b + 2 * d.saturating_sub(1))
}

/// Mass matrix at the Gauss order exact for its integrand.
pub fn assemble_mass(basis: &PuBasis, cover: &Cover) -> Result<Matrix> {
    Ok(Assembler::for_degree(cover, basis, 2 * basis.shape_degree())?.mass())
}

/// Stiffness matrix for polynomial drift coefficient `q` and a polynomial
/// diffusion field, at the Gauss order exact for the integrand.
pub fn assemble_stiffness(
    basis: &PuBasis,
    cover: &Cover,
    q: &Poly,
    field: &DiffusionField,
) -> Result<Matrix> {
    let (b, db) = field.polynomial().ok_or_else(|| {
        Error::UnsupportedCoefficient(format!(
            "{} diffusion is not polynomial in x; pass an explicit quadrature rule",
            field.kind().label()
        ))
    })?;
    let degree = stiffness_degree(basis, (q - db).degree(), b.degree());
    Ok(Assembler::for_degree(cover, basis, degree)?.stiffness_for(q, field))
}

/// Gauss nodes per cell used when projecting non-polynomial densities.
pub const PROJECTION_POINTS: usize = 24;

/// Weights of the mass-matrix projection of `f0`: solves `C w = f`,
/// `f_j = int f0 u_j dx`.
pub fn project_initial(basis: &PuBasis, cover: &Cover, f0: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let points = PROJECTION_POINTS.max(basis.shape_degree() + 1);
    let asm = Assembler::new(cover, basis, points)?;
    project_with(&asm, &asm.mass(), f0)
}

/// Projection with a prebuilt rule and its mass matrix.
pub fn project_with(asm: &Assembler, mass: &Matrix, f0: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let rhs = asm.load(f0);
    mass.solve(&rhs).map_err(|e| match e {
        Error::Singular { column } => {
            Error::Assembly(format!("mass matrix is singular at column {column}"))
        }
        other => other,
    })
}

/// One Crank-Nicolson step:
/// `(C - dt/2 A(t+dt)) w(t+dt) = (C + dt/2 A(t)) w(t)`.
pub fn cn_step(c: &Matrix, a_now: &Matrix, a_next: &Matrix, w: &[f64], dt: f64) -> Result<Vec<f64>> {
    let rhs = c.add_scaled(0.5 * dt, a_now).mul_vec(w);
    c.add_scaled(-0.5 * dt, a_next).solve(&rhs)
}

/// `f(x) = sum_m w_m u_m(x)` on a grid; zero outside the domain.
pub fn evaluate_pdf(basis: &PuBasis, cover: &Cover, w: &[f64], xs: &[f64]) -> Vec<f64> {
    let m = basis.max_size();
    let mut vbuf = vec![0.0; m];
    let mut dbuf = vec![0.0; m];
    xs.iter()
        .map(|&x| {
            let Some(c) = cover.cell_of(x) else {
                return 0.0;
            };
            let mut f = 0.0;
            for k in cover.cell_subdomains(c) {
                basis.local_values(cover, k, x, &mut vbuf, &mut dbuf);
                for (mu, v) in vbuf[..basis.size(k)].iter().enumerate() {
                    f += w[basis.index(k, mu)] * v;
                }
            }
            f
        })
        .collect()
}

/// `v_j = int p(x) u_j(x) dx`, exact; `v . w` is the `p`-moment of the density.
pub fn functional(basis: &PuBasis, cover: &Cover, p: &Poly) -> Result<Vec<f64>> {
    let asm = Assembler::for_degree(cover, basis, p.degree() + basis.shape_degree())?;
    Ok(asm.load(|x| p.eval(x)))
}
