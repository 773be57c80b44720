//! The follower's occupation-measure linear program
//! `min c^T x  s.t.  A x = b, x >= 0` and KKT certificates of its optimum.
//!
//! Columns are `(t, s, a)` with index `t |S||A| + s + |S| a`. Row block
//! `t < T` holds the flow constraints `W_t x_t - Z x_{t+1} = 0` where
//! `W_t[s', (s,a)] = P_t(s'|s,a,d_t)` and `Z = [I_S, ..., I_S]`; the last
//! block is the initial condition `Z x_0 = mu_0`. `c` stacks `-r_t`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{frozen_stages, push_forward, FlowSequence};
use crate::mdp::ValueTable;
use crate::model::{Dimensions, StackelbergModel};
use crate::{Error, Result};

/// Largest dense constraint matrix (in entries) built by default.
pub const DEFAULT_DENSE_CAP: u128 = 1 << 26;

/// Tolerance used when a certificate is built and self-checked.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Dense LP data for one leader action and one frozen flow.
#[derive(Debug, Clone, PartialEq)]
pub struct LpData {
    pub dims: Dimensions,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl LpData {
    pub fn column(&self, t: usize, s: usize, a: usize) -> usize {
        column_index(&self.dims, t, s, a)
    }

    /// Inverse of [`LpData::column`].
    pub fn column_parts(&self, col: usize) -> (usize, usize, usize) {
        let j = self.dims.joint();
        let (s, a) = self.dims.joint_parts(col % j);
        (col / j, s, a)
    }

    /// Row of state `s` in block `block` (`block == T` is the initial block).
    pub fn row(&self, block: usize, s: usize) -> usize {
        block * self.dims.follower_states + s
    }

    pub fn row_parts(&self, row: usize) -> (usize, usize) {
        let ns = self.dims.follower_states;
        (row / ns, row % ns)
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.a
            .chunks_exact(self.cols)
            .map(|row| crate::math::dot(row, x))
            .collect()
    }

    pub fn mul_transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &ur) in self.a.chunks_exact(self.cols).zip(u) {
            if ur != 0.0 {
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += x * ur;
                }
            }
        }
        out
    }
}

fn column_index(dims: &Dimensions, t: usize, s: usize, a: usize) -> usize {
    t * dims.joint() + dims.joint_index(s, a)
}

/// Builds the LP at the flow with the default size cap.
pub fn assemble_lp(model: &StackelbergModel, la: usize, flow: &FlowSequence) -> Result<LpData> {
    assemble_lp_capped(model, la, flow, DEFAULT_DENSE_CAP)
}

pub fn assemble_lp_capped(model: &StackelbergModel, la: usize, flow: &FlowSequence, cap: u128) -> Result<LpData> {
    let dims = *model.dims();
    let (ns, j, steps) = (dims.follower_states, dims.joint(), dims.steps());
    let rows = ns * steps;
    let cols = j * steps;
    let size = rows as u128 * cols as u128;
    if size > cap {
        return Err(Error::CapExceeded {
            what: "dense LP matrix",
            requested: size,
            cap,
        });
    }
    let stages = frozen_stages(model, la, flow)?;
    let mut a = vec![0.0; rows * cols];
    let mut c = vec![0.0; cols];
    for t in 0..steps {
        for k in 0..j {
            let col = t * j + k;
            c[col] = -stages[t].follower_r[k];
            let (s, _) = dims.joint_parts(k);
            if t < dims.horizon {
                for sp in 0..ns {
                    a[(t * ns + sp) * cols + col] = stages[t].follower_p[k * ns + sp];
                }
            }
            if t > 0 {
                a[((t - 1) * ns + s) * cols + col] = -1.0;
            } else {
                a[(dims.horizon * ns + s) * cols + col] = 1.0;
            }
        }
    }
    let mut b = vec![0.0; rows];
    b[dims.horizon * ns..].copy_from_slice(model.follower_initial());
    Ok(LpData {
        dims,
        rows,
        cols,
        a,
        b,
        c,
    })
}

/// Primal `x`, duals `u` and reduced costs `v = c - A^T u`, with the claimed
/// value `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
}

/// The six residuals of a certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `|A x - b|_inf`
    pub primal: f64,
    /// `|A^T u + v - c|_inf`
    pub dual: f64,
    pub min_x: f64,
    pub min_v: f64,
    /// `|v^T x|`
    pub complementarity: f64,
    /// `|V + c^T x|`
    pub value_gap: f64,
    pub tol: f64,
}

impl KktReport {
    /// Named residuals in a fixed order; sign conditions are reported as the
    /// amount by which they are violated.
    pub fn violations(&self) -> [(&'static str, f64); 6] {
        [
            ("Ax=b", self.primal),
            ("A^Tu+v=c", self.dual),
            ("x>=0", (-self.min_x).max(0.0)),
            ("v>=0", (-self.min_v).max(0.0)),
            ("v^Tx=0", self.complementarity),
            ("V=-c^Tx", self.value_gap),
        ]
    }

    pub fn passed(&self) -> bool {
        self.violations().iter().all(|(_, r)| *r <= self.tol)
    }

    pub fn first_failure(&self) -> Option<(&'static str, f64)> {
        self.violations().into_iter().find(|(_, r)| *r > self.tol)
    }
}

/// Residuals of `cert` against `lp`.
pub fn verify_kkt(lp: &LpData, cert: &KktCertificate, tol: f64) -> Result<KktReport> {
    let check = |what: &str, got: usize, want: usize| {
        if got != want {
            Err(Error::DimensionMismatch(format!(
                "certificate {what} has length {got}, LP needs {want}"
            )))
        } else {
            Ok(())
        }
    };
    check("x", cert.x.len(), lp.cols)?;
    check("v", cert.v.len(), lp.cols)?;
    check("u", cert.u.len(), lp.rows)?;
    let ax = lp.mul(&cert.x);
    let primal = crate::math::max_abs_diff(&ax, &lp.b);
    let atu = lp.mul_transpose(&cert.u);
    let dual = atu
        .iter()
        .zip(&cert.v)
        .zip(&lp.c)
        .map(|((p, v), c)| (p + v - c).abs())
        .fold(0.0, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let cx = crate::math::dot(&lp.c, &cert.x);
    Ok(KktReport {
        primal,
        dual,
        min_x: min(&cert.x),
        min_v: min(&cert.v),
        complementarity: crate::math::dot(&cert.v, &cert.x).abs(),
        value_gap: (cert.value + cx).abs(),
        tol,
    })
}

/// Certificate built from dynamic programming: `x` is the occupation
/// measure of the lowest-index greedy policy under the frozen flow,
/// `u_t = V_{t+1}` on the flow blocks and `-V_0` on the initial block, and
/// `v = c - A^T u`. The certificate is checked before it is returned.
pub fn kkt_certificate_from_dp(
    values: &ValueTable,
    model: &StackelbergModel,
    la: usize,
    flow: &FlowSequence,
) -> Result<KktCertificate> {
    let lp = assemble_lp(model, la, flow)?;
    let cert = dp_certificate(&lp, values, model, la, flow)?;
    let report = verify_kkt(&lp, &cert, CERTIFICATE_TOL)?;
    if let Some((condition, residual)) = report.first_failure() {
        return Err(Error::CertificateResidual {
            condition,
            residual,
            tol: CERTIFICATE_TOL,
        });
    }
    Ok(cert)
}

/// The same construction against an already assembled LP, without the
/// final check; pair with [`verify_kkt`] to inspect every residual.
pub fn dp_certificate(
    lp: &LpData,
    values: &ValueTable,
    model: &StackelbergModel,
    la: usize,
    flow: &FlowSequence,
) -> Result<KktCertificate> {
    let dims = *model.dims();
    let (ns, j, steps) = (dims.follower_states, dims.joint(), dims.steps());
    if values.steps() != steps {
        return Err(Error::DimensionMismatch(format!(
            "value table has {} epochs, model has {steps}",
            values.steps()
        )));
    }
    let stages = frozen_stages(model, la, flow)?;
    let mut x = vec![0.0; lp.cols];
    let mut mu = model.follower_initial().to_vec();
    for t in 0..steps {
        let xt = &mut x[t * j..(t + 1) * j];
        for s in 0..ns {
            xt[dims.joint_index(s, values.greedy_action(t, s))] = mu[s];
        }
        if t < dims.horizon {
            let xt = &x[t * j..(t + 1) * j];
            push_forward(xt, &stages[t].follower_p, ns, &mut mu);
        }
    }
    let mut u = vec![0.0; lp.rows];
    for t in 0..dims.horizon {
        u[t * ns..(t + 1) * ns].copy_from_slice(values.v_at(t + 1));
    }
    for s in 0..ns {
        u[dims.horizon * ns + s] = -values.v(0, s);
    }
    let atu = lp.mul_transpose(&u);
    let v: Vec<f64> = lp.c.iter().zip(&atu).map(|(c, p)| c - p).collect();
    Ok(KktCertificate {
        x,
        u,
        v,
        value: values.value(),
    })
}
