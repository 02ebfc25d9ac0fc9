//! Staggered marker-and-cell grid and the discrete spatial operators.
//!
//! Pressure lives at cell centers, the x velocity component at vertical
//! cell faces, the y component at horizontal faces. With that layout the
//! discrete gradient and divergence below are exact negative adjoints of
//! each other, and the averaged advection form is exactly skew-symmetric,
//! so the time integrator's energy bookkeeping closes to roundoff.
//!
//! Velocity fields are stored including the wall-normal boundary faces;
//! no-slip fields keep those entries identically zero and every operator
//! returns zero there. Tangential walls are handled by reflected ghost
//! values inside [`laplacian`].

/// Uniform rectangular staggered grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacGrid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    x0: f64,
    y0: f64,
}

impl MacGrid {
    /// Grid over `[0, lx] x [0, ly]` with `nx` by `ny` cells.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self::with_origin(nx, ny, 0.0, 0.0, lx, ly)
    }

    /// Grid over `[x0, x0+lx] x [y0, y0+ly]`.
    pub fn with_origin(nx: usize, ny: usize, x0: f64, y0: f64, lx: f64, ly: f64) -> Self {
        assert!(nx >= 3 && ny >= 3, "grid must be at least 3x3 cells");
        assert!(lx > 0.0 && ly > 0.0, "domain lengths must be positive");
        MacGrid {
            nx,
            ny,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            x0,
            y0,
        }
    }

    /// `n` by `n` grid on the unit square.
    pub fn unit_square(n: usize) -> Self {
        MacGrid::new(n, n, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    /// Cell area, the quadrature weight of every discrete inner product.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.hx,
            self.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    /// Position of the x-velocity face `(i, j)`, `0 <= i <= nx`.
    pub fn xface_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + i as f64 * self.hx,
            self.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    /// Position of the y-velocity face `(i, j)`, `0 <= j <= ny`.
    pub fn yface_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.hx,
            self.y0 + j as f64 * self.hy,
        )
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn xface_count(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn yface_count(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub(crate) fn cidx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub(crate) fn xidx(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub(crate) fn yidx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

/// Scalar field at cell centers (pressure, divergence).
#[derive(Clone, Debug)]
pub struct CellField {
    grid: MacGrid,
    data: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: &MacGrid) -> Self {
        CellField {
            grid: *grid,
            data: vec![0.0; grid.cell_count()],
        }
    }

    /// Sample `f(x, y)` at every cell center.
    pub fn from_fn(grid: &MacGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut c = CellField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                c.data[grid.cidx(i, j)] = f(x, y);
            }
        }
        c
    }

    pub fn grid(&self) -> &MacGrid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.cidx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.grid.cidx(i, j);
        self.data[idx] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// `a*p + b*q`, cellwise.
    pub fn lin2(a: f64, p: &CellField, b: f64, q: &CellField) -> CellField {
        assert_eq!(p.grid, q.grid, "cell fields live on different grids");
        let data = p
            .data
            .iter()
            .zip(&q.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        CellField { grid: p.grid, data }
    }

    /// Area-weighted l2 inner product.
    pub fn inner(&self, other: &CellField) -> f64 {
        assert_eq!(self.grid, other.grid, "cell fields live on different grids");
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        s * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// Velocity field on the staggered face lattices.
///
/// `ux` has `(nx+1) * ny` entries, `uy` has `nx * (ny+1)`; the entries with
/// face index 0 or `n` in the normal direction sit on the wall.
#[derive(Clone, Debug)]
pub struct FaceField {
    grid: MacGrid,
    ux: Vec<f64>,
    uy: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: &MacGrid) -> Self {
        FaceField {
            grid: *grid,
            ux: vec![0.0; grid.xface_count()],
            uy: vec![0.0; grid.yface_count()],
        }
    }

    /// Sample component functions at their face positions (boundary included).
    pub fn from_fn(
        grid: &MacGrid,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut u = FaceField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.xface_pos(i, j);
                u.ux[grid.xidx(i, j)] = fx(x, y);
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.yface_pos(i, j);
                u.uy[grid.yidx(i, j)] = fy(x, y);
            }
        }
        u
    }

    pub fn grid(&self) -> &MacGrid {
        &self.grid
    }

    #[inline]
    pub fn ux(&self, i: usize, j: usize) -> f64 {
        self.ux[self.grid.xidx(i, j)]
    }

    #[inline]
    pub fn uy(&self, i: usize, j: usize) -> f64 {
        self.uy[self.grid.yidx(i, j)]
    }

    #[inline]
    pub fn set_ux(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.grid.xidx(i, j);
        self.ux[idx] = v;
    }

    #[inline]
    pub fn set_uy(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.grid.yidx(i, j);
        self.uy[idx] = v;
    }

    /// Zero the wall-normal boundary faces.
    pub fn project_noslip(&mut self) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            self.ux[self.grid.xidx(0, j)] = 0.0;
            self.ux[self.grid.xidx(nx, j)] = 0.0;
        }
        for i in 0..nx {
            self.uy[self.grid.yidx(i, 0)] = 0.0;
            self.uy[self.grid.yidx(i, ny)] = 0.0;
        }
    }

    /// Largest boundary-face magnitude; zero for a conforming no-slip field.
    pub fn boundary_normal_max(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut m: f64 = 0.0;
        for j in 0..ny {
            m = m.max(self.ux[self.grid.xidx(0, j)].abs());
            m = m.max(self.ux[self.grid.xidx(nx, j)].abs());
        }
        for i in 0..nx {
            m = m.max(self.uy[self.grid.yidx(i, 0)].abs());
            m = m.max(self.uy[self.grid.yidx(i, ny)].abs());
        }
        m
    }

    /// `a*u + b*v`, facewise.
    pub fn lin2(a: f64, u: &FaceField, b: f64, v: &FaceField) -> FaceField {
        assert_eq!(u.grid, v.grid, "face fields live on different grids");
        let ux = u.ux.iter().zip(&v.ux).map(|(x, y)| a * x + b * y).collect();
        let uy = u.uy.iter().zip(&v.uy).map(|(x, y)| a * x + b * y).collect();
        FaceField { grid: u.grid, ux, uy }
    }

    /// `a*u + b*v + c*w`, facewise.
    pub fn lin3(
        a: f64,
        u: &FaceField,
        b: f64,
        v: &FaceField,
        c: f64,
        w: &FaceField,
    ) -> FaceField {
        assert_eq!(u.grid, v.grid, "face fields live on different grids");
        assert_eq!(u.grid, w.grid, "face fields live on different grids");
        let ux = u
            .ux
            .iter()
            .zip(&v.ux)
            .zip(&w.ux)
            .map(|((x, y), z)| a * x + b * y + c * z)
            .collect();
        let uy = u
            .uy
            .iter()
            .zip(&v.uy)
            .zip(&w.uy)
            .map(|((x, y), z)| a * x + b * y + c * z)
            .collect();
        FaceField { grid: u.grid, ux, uy }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &FaceField) {
        assert_eq!(self.grid, other.grid, "face fields live on different grids");
        for (x, y) in self.ux.iter_mut().zip(&other.ux) {
            *x += a * y;
        }
        for (x, y) in self.uy.iter_mut().zip(&other.uy) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.ux.iter_mut() {
            *x *= a;
        }
        for x in self.uy.iter_mut() {
            *x *= a;
        }
    }

    /// Area-weighted l2 inner product over both face lattices.
    pub fn inner(&self, other: &FaceField) -> f64 {
        assert_eq!(self.grid, other.grid, "face fields live on different grids");
        let sx: f64 = self.ux.iter().zip(&other.ux).map(|(a, b)| a * b).sum();
        let sy: f64 = self.uy.iter().zip(&other.uy).map(|(a, b)| a * b).sum();
        (sx + sy) * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        let mx = self.ux.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let my = self.uy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        mx.max(my)
    }
}

/// Discrete divergence, face velocities to cell centers.
pub fn divergence(u: &FaceField) -> CellField {
    let g = u.grid;
    let mut d = CellField::zeros(&g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let dudx = (u.ux[g.xidx(i + 1, j)] - u.ux[g.xidx(i, j)]) / g.hx;
            let dvdy = (u.uy[g.yidx(i, j + 1)] - u.uy[g.yidx(i, j)]) / g.hy;
            d.data[g.cidx(i, j)] = dudx + dvdy;
        }
    }
    d
}

/// Discrete gradient, cell centers to interior faces; boundary faces get zero.
///
/// Negative adjoint of [`divergence`]: `inner(gradient(p), u) == -inner(p, divergence(u))`
/// for every no-slip `u`, exactly up to roundoff.
pub fn gradient(p: &CellField) -> FaceField {
    let g = p.grid;
    let mut out = FaceField::zeros(&g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.ux[g.xidx(i, j)] = (p.data[g.cidx(i, j)] - p.data[g.cidx(i - 1, j)]) / g.hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.uy[g.yidx(i, j)] = (p.data[g.cidx(i, j)] - p.data[g.cidx(i, j - 1)]) / g.hy;
        }
    }
    out
}

/// Componentwise five-point Laplacian with no-slip walls.
///
/// Wall-normal neighbors use the stored zero boundary faces; wall-tangential
/// neighbors use the reflected ghost value `-u` so the interpolated wall
/// velocity vanishes. Symmetric and negative definite on interior faces.
pub fn laplacian(u: &FaceField) -> FaceField {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (hx2, hy2) = (g.hx * g.hx, g.hy * g.hy);
    let mut out = FaceField::zeros(&g);
    for j in 0..ny {
        for i in 1..nx {
            let c = u.ux[g.xidx(i, j)];
            let xx = (u.ux[g.xidx(i + 1, j)] - 2.0 * c + u.ux[g.xidx(i - 1, j)]) / hx2;
            let dn = if j == 0 { -c } else { u.ux[g.xidx(i, j - 1)] };
            let up = if j == ny - 1 { -c } else { u.ux[g.xidx(i, j + 1)] };
            let yy = (up - 2.0 * c + dn) / hy2;
            out.ux[g.xidx(i, j)] = xx + yy;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = u.uy[g.yidx(i, j)];
            let lt = if i == 0 { -c } else { u.uy[g.yidx(i - 1, j)] };
            let rt = if i == nx - 1 { -c } else { u.uy[g.yidx(i + 1, j)] };
            let xx = (rt - 2.0 * c + lt) / hx2;
            let yy = (u.uy[g.yidx(i, j + 1)] - 2.0 * c + u.uy[g.yidx(i, j - 1)]) / hy2;
            out.uy[g.yidx(i, j)] = xx + yy;
        }
    }
    out
}

/// Discrete Dirichlet energy `-inner(laplacian(u), u)`, the viscous term of
/// the energy budget. Nonnegative, zero only for the zero field.
pub fn grad_norm_sq(u: &FaceField) -> f64 {
    -laplacian(u).inner(u)
}

/// Interpolated advecting-velocity coefficients for [`advect_skew`].
pub(crate) struct AdvectCoeffs {
    /// x component of `w` at cell centers, `nx * ny`.
    pub(crate) wxc: Vec<f64>,
    /// y component of `w` at cell centers, `nx * ny`.
    pub(crate) wyc: Vec<f64>,
    /// x component of `w` at grid nodes, `(nx+1) * (ny+1)`; zero on y walls.
    pub(crate) wxn: Vec<f64>,
    /// y component of `w` at grid nodes, `(nx+1) * (ny+1)`; zero on x walls.
    pub(crate) wyn: Vec<f64>,
}

pub(crate) fn advect_coeffs(w: &FaceField) -> AdvectCoeffs {
    let g = w.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut wxc = vec![0.0; nx * ny];
    let mut wyc = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            wxc[j * nx + i] = 0.5 * (w.ux[g.xidx(i, j)] + w.ux[g.xidx(i + 1, j)]);
            wyc[j * nx + i] = 0.5 * (w.uy[g.yidx(i, j)] + w.uy[g.yidx(i, j + 1)]);
        }
    }
    let nodes = (nx + 1) * (ny + 1);
    let mut wxn = vec![0.0; nodes];
    let mut wyn = vec![0.0; nodes];
    for j in 1..ny {
        for i in 0..=nx {
            wxn[j * (nx + 1) + i] = 0.5 * (w.ux[g.xidx(i, j - 1)] + w.ux[g.xidx(i, j)]);
        }
    }
    for j in 0..=ny {
        for i in 1..nx {
            wyn[j * (nx + 1) + i] = 0.5 * (w.uy[g.yidx(i - 1, j)] + w.uy[g.yidx(i, j)]);
        }
    }
    AdvectCoeffs { wxc, wyc, wxn, wyn }
}

/// Skew advection `w . grad(v) + (1/2) div(w) v`, the average of the advective
/// and divergence forms with centered interpolation of `w`.
///
/// For no-slip `w` and `v` the operator satisfies `inner(advect_skew(w, v), v) == 0`
/// up to roundoff; the pairwise coefficients are antisymmetric by construction.
pub fn advect_skew(w: &FaceField, v: &FaceField) -> FaceField {
    let g = v.grid;
    assert_eq!(w.grid, g, "advecting and advected fields live on different grids");
    let (nx, ny) = (g.nx, g.ny);
    let c = advect_coeffs(w);
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let cell = |i: usize, j: usize| j * nx + i;
    let mut out = FaceField::zeros(&g);
    for j in 0..ny {
        for i in 1..nx {
            let tx = c.wxc[cell(i, j)] * v.ux[g.xidx(i + 1, j)]
                - c.wxc[cell(i - 1, j)] * v.ux[g.xidx(i - 1, j)];
            let t_up = if j + 1 < ny {
                c.wyn[node(i, j + 1)] * v.ux[g.xidx(i, j + 1)]
            } else {
                0.0
            };
            let t_dn = if j >= 1 {
                c.wyn[node(i, j)] * v.ux[g.xidx(i, j - 1)]
            } else {
                0.0
            };
            out.ux[g.xidx(i, j)] = tx / (2.0 * g.hx) + (t_up - t_dn) / (2.0 * g.hy);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let t_rt = if i + 1 < nx {
                c.wxn[node(i + 1, j)] * v.uy[g.yidx(i + 1, j)]
            } else {
                0.0
            };
            let t_lt = if i >= 1 {
                c.wxn[node(i, j)] * v.uy[g.yidx(i - 1, j)]
            } else {
                0.0
            };
            let ty = c.wyc[cell(i, j)] * v.uy[g.yidx(i, j + 1)]
                - c.wyc[cell(i, j - 1)] * v.uy[g.yidx(i, j - 1)];
            out.uy[g.yidx(i, j)] = (t_rt - t_lt) / (2.0 * g.hx) + ty / (2.0 * g.hy);
        }
    }
    out
}

/// Gradient of the divergence, the stiff coupling term of the uncoupled
/// momentum solve. Symmetric negative semidefinite:
/// `inner(grad_div(u), u) == -norm(divergence(u))^2`.
pub fn grad_div(u: &FaceField) -> FaceField {
    gradient(&divergence(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Deterministic smooth-ish filler for identity checks.
    fn wiggle(seed: f64) -> impl Fn(f64, f64) -> f64 {
        move |x, y| (17.3 * x + 3.1 * y + seed).sin() + 0.3 * (9.7 * x * y - seed).cos()
    }

    fn random_noslip(grid: &MacGrid, seed: f64) -> FaceField {
        let mut u = FaceField::from_fn(grid, wiggle(seed), wiggle(seed + 4.7));
        u.project_noslip();
        u
    }

    #[test]
    fn divergence_of_linear_field_is_exact() {
        let g = MacGrid::new(8, 6, 1.0, 1.5);
        let u = FaceField::from_fn(&g, |x, _| x, |_, y| 3.0 * y);
        let d = divergence(&u);
        for j in 0..6 {
            for i in 0..8 {
                assert!((d.get(i, j) - 4.0).abs() < 1e-12, "div = {}", d.get(i, j));
            }
        }
    }

    #[test]
    fn gradient_of_linear_pressure_is_exact() {
        let g = MacGrid::new(8, 6, 1.0, 1.0);
        let p = CellField::from_fn(&g, |x, y| x + 2.0 * y);
        let gp = gradient(&p);
        for j in 0..6 {
            for i in 1..8 {
                assert!((gp.ux(i, j) - 1.0).abs() < 1e-12);
            }
        }
        for j in 1..6 {
            for i in 0..8 {
                assert!((gp.uy(i, j) - 2.0).abs() < 1e-12);
            }
        }
        // boundary faces stay zero
        assert_eq!(gp.ux(0, 3), 0.0);
        assert_eq!(gp.ux(8, 3), 0.0);
        assert_eq!(gp.uy(4, 0), 0.0);
        assert_eq!(gp.uy(4, 6), 0.0);
    }

    #[test]
    fn gradient_is_negative_adjoint_of_divergence() {
        let g = MacGrid::new(9, 7, 1.3, 0.8);
        let u = random_noslip(&g, 0.2);
        let p = CellField::from_fn(&g, wiggle(1.9));
        let lhs = gradient(&p).inner(&u);
        let rhs = -p.inner(&divergence(&u));
        let scale = p.norm() * u.norm() + 1e-300;
        assert!(
            (lhs - rhs).abs() <= 1e-13 * scale,
            "adjoint gap {} vs scale {}",
            (lhs - rhs).abs(),
            scale
        );
    }

    #[test]
    fn advection_is_skew_symmetric() {
        let g = MacGrid::new(10, 9, 1.0, 1.0);
        for s in 0..5 {
            let w = random_noslip(&g, 0.3 + s as f64);
            let v = random_noslip(&g, 2.9 - s as f64);
            let a = advect_skew(&w, &v).inner(&v);
            let scale = (1.0 + w.norm_inf()) * v.inner(&v) + 1e-300;
            assert!(a.abs() <= 1e-13 * scale, "skew defect {} vs scale {}", a, scale);
        }
    }

    #[test]
    fn advection_matches_hand_value_for_constant_w_linear_v() {
        // w = (2, -1), v = (1 + 2x + 3y, 4 - x + 5y):
        // (w.grad v)_x = 2*2 + (-1)*3 = 1, (w.grad v)_y = 2*(-1) + (-1)*5 = -7,
        // and div w = 0 so the skew term adds nothing.
        let g = MacGrid::new(12, 12, 1.0, 1.0);
        let w = FaceField::from_fn(&g, |_, _| 2.0, |_, _| -1.0);
        let v = FaceField::from_fn(&g, |x, y| 1.0 + 2.0 * x + 3.0 * y, |x, y| 4.0 - x + 5.0 * y);
        let a = advect_skew(&w, &v);
        for j in 1..11 {
            for i in 2..11 {
                assert!((a.ux(i, j) - 1.0).abs() < 1e-12, "got {}", a.ux(i, j));
            }
        }
        for j in 2..11 {
            for i in 1..11 {
                assert!((a.uy(i, j) + 7.0).abs() < 1e-12, "got {}", a.uy(i, j));
            }
        }
    }

    #[test]
    fn laplacian_is_symmetric_and_negative() {
        let g = MacGrid::new(8, 11, 1.0, 2.0);
        let u = random_noslip(&g, 0.5);
        let v = random_noslip(&g, 7.1);
        let luv = laplacian(&u).inner(&v);
        let ulv = u.inner(&laplacian(&v));
        let scale = u.norm() * v.norm() / g.hx().min(g.hy()).powi(2);
        assert!((luv - ulv).abs() <= 1e-13 * scale);
        assert!(laplacian(&u).inner(&u) < 0.0);
        assert!(grad_norm_sq(&u) > 0.0);
    }

    #[test]
    fn grad_div_quadratic_form_is_minus_divergence_norm() {
        let g = MacGrid::new(7, 9, 1.1, 0.9);
        let u = random_noslip(&g, 3.3);
        let q = grad_div(&u).inner(&u);
        let d = divergence(&u).norm();
        assert!((q + d * d).abs() <= 1e-13 * d * d);
    }

    #[test]
    fn inner_product_weights_by_cell_area() {
        let g = MacGrid::new(4, 5, 2.0, 1.0);
        let ones = FaceField::from_fn(&g, |_, _| 1.0, |_, _| 0.0);
        // (nx+1)*ny x-faces, each weighted hx*hy = 0.5*0.2 = 0.1
        let expect = (5 * 5) as f64 * 0.1;
        assert!((ones.inner(&ones) - expect).abs() < 1e-12);
        let p = CellField::from_fn(&g, |_, _| 2.0);
        assert!((p.inner(&p) - 4.0 * 20.0 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn filter_identity_norm_of_scaled_field() {
        // norm(c*v) == |c|*norm(v) underpins reporting the first-order
        // estimator as the filter correction magnitude.
        let g = MacGrid::unit_square(6);
        let v = random_noslip(&g, 1.0);
        let mut w = v.clone();
        w.scale(-0.75);
        assert!((w.norm() - 0.75 * v.norm()).abs() <= 1e-14 * v.norm());
    }
}
