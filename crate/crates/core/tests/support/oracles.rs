//! Slow, literal reference implementations. Nothing here calls into the
//! library's pair search, binning or correlation code.

pub type V3 = [f64; 3];

#[derive(Clone, Copy, Debug)]
pub struct Bump {
    pub a: f64,
    pub rc: f64,
}

impl Bump {
    fn s(&self, r2: f64) -> f64 {
        (1.0 - r2 / (self.rc * self.rc)).max(0.0)
    }

    /// V at squared distance r².
    pub fn value(&self, r2: f64) -> f64 {
        self.a * self.s(r2).powi(4)
    }

    /// ∂_βV at separation ξ: V′(r)ξ/r = −(8a/rc²)(1 − r²/rc²)³ ξ.
    pub fn grad(&self, x: &V3) -> V3 {
        let c = -8.0 * self.a * self.s(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).powi(3) / (self.rc * self.rc);
        [c * x[0], c * x[1], c * x[2]]
    }

    /// Ψ^{βγ}(ξ) = −∂_βV(ξ)ξ^γ.
    pub fn psi(&self, x: &V3, b: usize, g: usize) -> f64 {
        -self.grad(x)[b] * x[g]
    }
}

/// Separation ξ_i − ξ_j reduced to the nearest periodic image.
pub fn separation(p: &V3, q: &V3, l: f64, d: usize) -> V3 {
    let mut x = [0.0; 3];
    for a in 0..d {
        let y = p[a] - q[a];
        x[a] = y - l * (y / l).round();
    }
    x
}

fn norm2(x: &V3) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

/// All-pairs forces and energy.
pub fn brute_forces(pos: &[V3], l: f64, d: usize, v: Bump) -> (Vec<V3>, f64) {
    let n = pos.len();
    let mut f = vec![[0.0; 3]; n];
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = separation(&pos[i], &pos[j], l, d);
            let g = v.grad(&x);
            for a in 0..d {
                f[i][a] -= g[a];
            }
            if i < j {
                e += v.value(norm2(&x));
            }
        }
    }
    (f, e)
}

#[derive(Clone, Debug, Default)]
pub struct Frame {
    pub count: f64,
    pub momentum: V3,
    pub energy: f64,
    pub stress: [f64; 9],
    pub heat: V3,
    pub drift: [f64; 9],
    pub conduction: [f64; 9],
    pub nonlocal: [f64; 9],
    pub phi_pairs: [f64; 9],
}

pub struct Particle {
    pub energy: f64,
    pub stress: [f64; 9],
    pub heat: V3,
    pub phi0: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Per-particle z^{d+1}, w_*, w^{d+1}, Φ₀ and Φ by direct double loops.
pub fn particles(pos: &[V3], vel: &[V3], l: f64, d: usize, v: Bump) -> Vec<Particle> {
    particles_with(pos, vel, l, d, v, false)
}

/// With `abs` every factor enters by magnitude, giving the scale of the
/// terms that a sum cancels.
pub fn particles_with(pos: &[V3], vel: &[V3], l: f64, d: usize, v: Bump, abs: bool) -> Vec<Particle> {
    let m = |x: f64| if abs { x.abs() } else { x };
    let n = pos.len();
    let mut out = Vec::new();
    for i in 0..n {
        let vi: V3 = [m(vel[i][0]), m(vel[i][1]), m(vel[i][2])];
        let mut z = 0.5 * (0..d).map(|a| vi[a] * vi[a]).sum::<f64>();
        for j in 0..n {
            if j != i {
                z += 0.5 * m(v.value(norm2(&separation(&pos[i], &pos[j], l, d))));
            }
        }
        let mut stress = [0.0; 9];
        let mut heat = [0.0; 3];
        let mut phi0 = vec![0.0; 27];
        let mut phi = vec![0.0; 81];
        for b in 0..d {
            for k in 0..d {
                stress[3 * b + k] = vi[b] * vi[k];
            }
            heat[b] = vi[b] * z;
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            let x0 = separation(&pos[i], &pos[j], l, d);
            let x: V3 = [m(x0[0]), m(x0[1]), m(x0[2])];
            for b in 0..d {
                for k in 0..d {
                    let p = m(v.psi(&x0, b, k));
                    stress[3 * b + k] += 0.5 * p;
                    heat[k] += 0.5 * p * 0.5 * (vi[b] + m(vel[j][b]));
                    for c in 0..d {
                        phi0[9 * b + 3 * k + c] += 0.5 * p * x[c];
                        for g in 0..d {
                            phi[27 * b + 9 * k + 3 * c + g] += 0.5 * p * x[c] * x[g];
                        }
                    }
                }
            }
        }
        out.push(Particle { energy: z, stress, heat, phi0, phi });
    }
    out
}

/// Space integrals of every frame observable by direct loops.
pub fn frame(pos: &[V3], vel: &[V3], l: f64, d: usize, v: Bump) -> Frame {
    frame_with(pos, vel, l, d, v, false)
}

pub fn frame_with(pos: &[V3], vel: &[V3], l: f64, d: usize, v: Bump, abs: bool) -> Frame {
    let m = |x: f64| if abs { x.abs() } else { x };
    let n = pos.len();
    let parts = particles_with(pos, vel, l, d, v, abs);
    let psi = |i: usize, j: usize, a: usize, b: usize| m(v.psi(&separation(&pos[i], &pos[j], l, d), a, b));
    let mut f = Frame { count: n as f64, ..Default::default() };
    for (i, p) in parts.iter().enumerate() {
        let vi: V3 = [m(vel[i][0]), m(vel[i][1]), m(vel[i][2])];
        f.energy += p.energy;
        for a in 0..d {
            f.momentum[a] += vi[a];
            f.heat[a] += p.heat[a];
        }
        for g in 0..d {
            for mm in 0..d {
                let mut psi_sum = 0.0;
                for s in 0..n {
                    if s != i {
                        psi_sum += psi(i, s, g, mm);
                    }
                }
                f.stress[3 * g + mm] += p.stress[3 * g + mm];
                f.drift[3 * g + mm] += vi[g] * p.heat[mm] + p.energy * psi_sum;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let xj = separation(&pos[i], &pos[j], l, d);
                    for nu in 0..d {
                        f.conduction[3 * g + mm] += 0.25 * psi(i, j, nu, g) * vi[mm] * 0.5 * (vi[nu] + m(vel[j][nu]));
                    }
                    let dv = v.grad(&xj);
                    for s in 0..n {
                        if s == i {
                            continue;
                        }
                        for k in 0..d {
                            f.nonlocal[3 * g + mm] += m(dv[k]) * m(xj[mm]) * psi(i, s, k, g);
                        }
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let x = separation(&pos[i], &pos[j], l, d);
            for a in 0..d {
                for b in 0..d {
                    f.phi_pairs[3 * a + b] += psi(i, j, a, a) * x[b] * x[b];
                }
            }
        }
    }
    f
}

/// Cell of a wrapped position on an m^d grid, row-major with stride 3 axes.
pub fn cell(x: &V3, l: f64, d: usize, m: usize) -> usize {
    let mut idx = [0usize; 3];
    for a in 0..d {
        idx[a] = ((x[a] / l * m as f64) as usize).min(m - 1);
    }
    let sh = |a: usize| if a < d { m } else { 1 };
    (idx[0] * sh(1) + idx[1]) * sh(2) + idx[2]
}

/// (1/V)·mean over origins of Σ_c Σ_c′ vol² A_c(t+τ) B_c′(t).
pub fn correlation(a: &[Vec<f64>], b: &[Vec<f64>], vol: f64, lag: usize) -> f64 {
    let frames = a.len();
    let cells = a[0].len();
    let v = vol * cells as f64;
    let mut s = 0.0;
    for t in 0..frames - lag {
        for c in 0..cells {
            for c2 in 0..cells {
                s += vol * vol * a[t + lag][c] * b[t][c2];
            }
        }
    }
    s / v / (frames - lag) as f64
}

/// (1/V)·mean over origins of Σ vol³ A_c(t+τ) B_c′(t+τ) W_c″(t).
pub fn three_current(a: &[Vec<f64>], b: &[Vec<f64>], w: &[Vec<f64>], vol: f64, lag: usize) -> f64 {
    let frames = a.len();
    let cells = a[0].len();
    let v = vol * cells as f64;
    let mut s = 0.0;
    for t in 0..frames - lag {
        for c in 0..cells {
            for c2 in 0..cells {
                for c3 in 0..cells {
                    s += vol.powi(3) * a[t + lag][c] * b[t + lag][c2] * w[t][c3];
                }
            }
        }
    }
    s / v / (frames - lag) as f64
}
