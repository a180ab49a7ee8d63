//! A single LSTM cell with hand-derived backward pass.
//!
//! Gates follow the usual formulation:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   c' = f ⊙ c + i ⊙ g
//! o = σ(W_o x + U_o h + b_o)      h' = o ⊙ tanh(c')
//! ```
//!
//! With peepholes enabled, `i` and `f` additionally see `p ⊙ c` and `o`
//! sees `p ⊙ c'`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{Matrix, Vector};
use super::rng::SplitMix64;
use super::{sigmoid, tanh, NumericsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

pub const GATES: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

const PEEPHOLES: [&str; 3] = ["input", "forget", "output"];

impl Gate {
    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    /// hidden × input
    pub w: Matrix,
    /// hidden × hidden
    pub u: Matrix,
    pub b: Vector,
}

impl GateWeights {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GateWeights {
            w: Matrix::zeros(hidden_dim, input_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b: Vector::zeros(hidden_dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Indexed by `Gate as usize`.
    pub gates: [GateWeights; 4],
    /// Peephole vectors for the input, forget and output gates.
    pub peepholes: Option<[Vector; 3]>,
}

impl LstmWeights {
    pub fn zeros(input_dim: usize, hidden_dim: usize, peepholes: bool) -> Self {
        LstmWeights {
            input_dim,
            hidden_dim,
            gates: core::array::from_fn(|_| GateWeights::zeros(input_dim, hidden_dim)),
            peepholes: peepholes.then(|| core::array::from_fn(|_| Vector::zeros(hidden_dim))),
        }
    }

    /// Uniform(-1/√hidden, 1/√hidden) weights, zero biases except a forget
    /// bias of 1.
    pub fn random(input_dim: usize, hidden_dim: usize, peepholes: bool, rng: &mut SplitMix64) -> Self {
        let mut w = Self::zeros(input_dim, hidden_dim, peepholes);
        let bound = 1.0 / libm::sqrt(hidden_dim as f64);
        for gate in w.gates.iter_mut() {
            for v in gate.w.as_mut_slice() {
                *v = rng.uniform(-bound, bound);
            }
            for v in gate.u.as_mut_slice() {
                *v = rng.uniform(-bound, bound);
            }
        }
        w.gates[Gate::Forget as usize].b.iter_mut().for_each(|b| *b = 1.0);
        if let Some(p) = w.peepholes.as_mut() {
            for v in p.iter_mut().flat_map(|p| p.iter_mut()) {
                *v = rng.uniform(-bound, bound);
            }
        }
        w
    }

    pub fn gate(&self, g: Gate) -> &GateWeights {
        &self.gates[g as usize]
    }

    pub fn gate_mut(&mut self, g: Gate) -> &mut GateWeights {
        &mut self.gates[g as usize]
    }

    /// A zeroed buffer of the same shape, for gradient accumulation.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim, self.peepholes.is_some())
    }

    pub fn add_assign(&mut self, other: &LstmWeights) {
        for (a, b) in self.gates.iter_mut().zip(&other.gates) {
            a.w.add_assign(&b.w);
            a.u.add_assign(&b.u);
            super::add_assign(&mut a.b, &b.b);
        }
        if let (Some(a), Some(b)) = (self.peepholes.as_mut(), other.peepholes.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                super::add_assign(x, y);
            }
        }
    }

    /// Visit every tensor with a stable name, in a fixed order.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(String, (usize, usize), &'a [f64])) {
        for (g, gw) in GATES.iter().zip(&self.gates) {
            f(format!("lstm.{}.w", g.name()), gw.w.shape(), gw.w.as_slice());
            f(format!("lstm.{}.u", g.name()), gw.u.shape(), gw.u.as_slice());
            f(format!("lstm.{}.b", g.name()), (1, gw.b.dim()), &gw.b);
        }
        if let Some(p) = &self.peepholes {
            for (name, v) in PEEPHOLES.iter().zip(p) {
                f(format!("lstm.peephole.{name}"), (1, v.dim()), v);
            }
        }
    }

    pub fn for_each_mut<'a>(&'a mut self, mut f: impl FnMut(String, (usize, usize), &'a mut [f64])) {
        for (g, gw) in GATES.iter().zip(self.gates.iter_mut()) {
            let GateWeights { w, u, b } = gw;
            let (ws, us, bn) = (w.shape(), u.shape(), b.dim());
            f(format!("lstm.{}.w", g.name()), ws, w.as_mut_slice());
            f(format!("lstm.{}.u", g.name()), us, u.as_mut_slice());
            f(format!("lstm.{}.b", g.name()), (1, bn), &mut b.0);
        }
        if let Some(p) = &mut self.peepholes {
            for (name, v) in PEEPHOLES.iter().zip(p.iter_mut()) {
                let n = v.dim();
                f(format!("lstm.peephole.{name}"), (1, n), &mut v.0);
            }
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    peepholes: bool,
}

/// Gradients with respect to the cell inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

fn check(op: &'static str, expected: usize, found: usize) -> Result<(), NumericsError> {
    if expected != found {
        return Err(NumericsError::Shape { op, expected, found });
    }
    Ok(())
}

pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w: &LstmWeights,
) -> Result<(Vec<f64>, Vec<f64>, LstmCache), NumericsError> {
    check("lstm_cell_forward x", w.input_dim, x.len())?;
    check("lstm_cell_forward h", w.hidden_dim, h_prev.len())?;
    check("lstm_cell_forward c", w.hidden_dim, c_prev.len())?;

    let pre = |g: Gate| {
        let gw = w.gate(g);
        let mut z = gw.b.0.clone();
        gw.w.mul_vec_add(x, &mut z);
        gw.u.mul_vec_add(h_prev, &mut z);
        z
    };
    let mut zi = pre(Gate::Input);
    let mut zf = pre(Gate::Forget);
    let mut zo = pre(Gate::Output);
    let zg = pre(Gate::Candidate);

    if let Some([pi, pf, _]) = &w.peepholes {
        for k in 0..w.hidden_dim {
            zi[k] += pi[k] * c_prev[k];
            zf[k] += pf[k] * c_prev[k];
        }
    }
    let i: Vec<f64> = zi.iter().map(|&z| sigmoid(z)).collect();
    let f: Vec<f64> = zf.iter().map(|&z| sigmoid(z)).collect();
    let g: Vec<f64> = zg.iter().map(|&z| tanh(z)).collect();
    let c: Vec<f64> = (0..w.hidden_dim).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    if let Some([_, _, po]) = &w.peepholes {
        for k in 0..w.hidden_dim {
            zo[k] += po[k] * c[k];
        }
    }
    let o: Vec<f64> = zo.iter().map(|&z| sigmoid(z)).collect();
    let tanh_c: Vec<f64> = c.iter().map(|&v| tanh(v)).collect();
    let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    let cache = LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        g,
        c: c.clone(),
        tanh_c,
        peepholes: w.peepholes.is_some(),
    };
    Ok((h, c, cache))
}

/// Backward through one cell. Weight gradients are accumulated into `acc`,
/// input gradients are returned.
pub fn lstm_cell_backward(
    dh: &[f64],
    dc: &[f64],
    cache: &LstmCache,
    w: &LstmWeights,
    acc: &mut LstmWeights,
) -> Result<StepGrads, NumericsError> {
    let n = w.hidden_dim;
    if cache.x.len() != w.input_dim
        || cache.c.len() != n
        || cache.peepholes != w.peepholes.is_some()
        || acc.input_dim != w.input_dim
        || acc.hidden_dim != n
        || acc.peepholes.is_some() != w.peepholes.is_some()
    {
        return Err(NumericsError::StaleCache);
    }
    check("lstm_cell_backward dh", n, dh.len())?;
    check("lstm_cell_backward dc", n, dc.len())?;

    let LstmCache { x, h_prev, c_prev, i, f, o, g, c, tanh_c, .. } = cache;

    let mut dz_o = vec![0.0; n];
    let mut dc_total = vec![0.0; n];
    for k in 0..n {
        let d_o = dh[k] * tanh_c[k];
        dz_o[k] = d_o * o[k] * (1.0 - o[k]);
        dc_total[k] = dc[k] + dh[k] * o[k] * (1.0 - tanh_c[k] * tanh_c[k]);
    }
    if let Some([_, _, po]) = &w.peepholes {
        for k in 0..n {
            dc_total[k] += dz_o[k] * po[k];
        }
    }
    let mut dz_i = vec![0.0; n];
    let mut dz_f = vec![0.0; n];
    let mut dz_g = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        dz_i[k] = dc_total[k] * g[k] * i[k] * (1.0 - i[k]);
        dz_f[k] = dc_total[k] * c_prev[k] * f[k] * (1.0 - f[k]);
        dz_g[k] = dc_total[k] * i[k] * (1.0 - g[k] * g[k]);
        dc_prev[k] = dc_total[k] * f[k];
    }
    if let (Some([pi, pf, _]), Some([api, apf, apo])) = (&w.peepholes, acc.peepholes.as_mut()) {
        for k in 0..n {
            dc_prev[k] += dz_i[k] * pi[k] + dz_f[k] * pf[k];
            api[k] += dz_i[k] * c_prev[k];
            apf[k] += dz_f[k] * c_prev[k];
            apo[k] += dz_o[k] * c[k];
        }
    }

    let mut dx = vec![0.0; w.input_dim];
    let mut dh_prev = vec![0.0; n];
    for (gate, dz) in [
        (Gate::Input, &dz_i),
        (Gate::Forget, &dz_f),
        (Gate::Output, &dz_o),
        (Gate::Candidate, &dz_g),
    ] {
        let gw = w.gate(gate);
        let ga = acc.gate_mut(gate);
        ga.w.add_outer(dz, x);
        ga.u.add_outer(dz, h_prev);
        super::add_assign(&mut ga.b, dz);
        gw.w.vec_mul_add(dz, &mut dx);
        gw.u.vec_mul_add(dz, &mut dh_prev);
    }
    Ok(StepGrads { dx, dh_prev, dc_prev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SplitMix64};
    use std::vec::Vec;

    fn rand_vec(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    fn random_weights(rng: &mut SplitMix64, inp: usize, hid: usize, peep: bool) -> LstmWeights {
        let mut w = LstmWeights::zeros(inp, hid, peep);
        w.for_each_mut(|_, _, s| s.iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0)));
        w
    }

    fn flatten(w: &LstmWeights) -> Vec<f64> {
        let mut out = Vec::new();
        w.for_each(|_, _, s| out.extend_from_slice(s));
        out
    }

    fn unflatten(w: &mut LstmWeights, flat: &[f64]) {
        let mut pos = 0;
        w.for_each_mut(|_, _, s| {
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        });
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Straight scalar evaluation of the gate equations (no peepholes).
    fn scalar_oracle(x: &[f64], h: &[f64], c: &[f64], w: &LstmWeights) -> (Vec<f64>, Vec<f64>) {
        let n = w.hidden_dim;
        let mut hs = Vec::new();
        let mut cs = Vec::new();
        for k in 0..n {
            let mut z = [0.0f64; 4];
            for (gi, g) in GATES.iter().enumerate() {
                let gw = w.gate(*g);
                let mut acc = gw.b[k];
                for j in 0..w.input_dim {
                    acc += gw.w.get(k, j) * x[j];
                }
                for j in 0..n {
                    acc += gw.u.get(k, j) * h[j];
                }
                z[gi] = acc;
            }
            let (i, f, o, g) = (sig(z[0]), sig(z[1]), sig(z[2]), z[3].tanh());
            let cn = f * c[k] + i * g;
            cs.push(cn);
            hs.push(o * cn.tanh());
        }
        (hs, cs)
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let w = LstmWeights::zeros(3, 2, false);
        let (h, c, cache) = lstm_cell_forward(&[0.3, -1.0, 2.0], &[0.0; 2], &[0.0; 2], &w).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);
        assert_eq!(cache.i, vec![0.5, 0.5]);
        assert_eq!(cache.g, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut w = LstmWeights::zeros(2, 3, false);
        w.gate_mut(Gate::Forget).b.iter_mut().for_each(|b| *b = 50.0);
        let c_prev = [0.7, -0.2, 1.3];
        let (_, c, cache) = lstm_cell_forward(&[1.0, -1.0], &[0.1, 0.2, 0.3], &c_prev, &w).unwrap();
        for k in 0..3 {
            assert!((c[k] - c_prev[k]).abs() < 1e-12);
        }
        // dc_prev ≈ dc when the forget gate is open and nothing else flows.
        let mut acc = w.zeros_like();
        let dc = [0.4, -0.9, 2.0];
        let g = lstm_cell_backward(&[0.0; 3], &dc, &cache, &w, &mut acc).unwrap();
        for k in 0..3 {
            assert!((g.dc_prev[k] - dc[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        let mut rng = SplitMix64::new(21);
        for _ in 0..20 {
            let w = random_weights(&mut rng, 3, 3, false);
            let x = rand_vec(&mut rng, 3);
            let h = rand_vec(&mut rng, 3);
            let c = rand_vec(&mut rng, 3);
            let (hn, cn, _) = lstm_cell_forward(&x, &h, &c, &w).unwrap();
            let (ho, co) = scalar_oracle(&x, &h, &c, &w);
            for k in 0..3 {
                assert!(((hn[k] - ho[k]) / ho[k]).abs() < 1e-12);
                assert!(((cn[k] - co[k]) / co[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = SplitMix64::new(4);
        let w = random_weights(&mut rng, 2, 2, true);
        let (_, _, cache) = lstm_cell_forward(&[0.5, 0.1], &[0.2, 0.3], &[-0.4, 0.9], &w).unwrap();
        let mut acc = w.zeros_like();
        let g = lstm_cell_backward(&[0.0; 2], &[0.0; 2], &cache, &w, &mut acc).unwrap();
        assert!(g.dx.iter().chain(&g.dh_prev).chain(&g.dc_prev).all(|v| *v == 0.0));
        assert!(flatten(&acc).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let w = LstmWeights::zeros(2, 3, false);
        assert!(lstm_cell_forward(&[0.0; 3], &[0.0; 3], &[0.0; 3], &w).is_err());
        let (_, _, cache) = lstm_cell_forward(&[0.0; 2], &[0.0; 3], &[0.0; 3], &w).unwrap();
        let other = LstmWeights::zeros(2, 4, false);
        let mut acc = other.zeros_like();
        assert_eq!(
            lstm_cell_backward(&[0.0; 4], &[0.0; 4], &cache, &other, &mut acc),
            Err(NumericsError::StaleCache)
        );
        let peep = LstmWeights::zeros(2, 3, true);
        let mut acc = peep.zeros_like();
        assert_eq!(
            lstm_cell_backward(&[0.0; 3], &[0.0; 3], &cache, &peep, &mut acc),
            Err(NumericsError::StaleCache)
        );
    }

    /// L = u·h' + v·c' for fixed random u, v; checks every input and weight.
    fn check_cell(peep: bool, seed: u64) {
        let mut rng = SplitMix64::new(seed);
        let (inp, hid) = (2, 2);
        let w = random_weights(&mut rng, inp, hid, peep);
        let x = rand_vec(&mut rng, inp);
        let h = rand_vec(&mut rng, hid);
        let c = rand_vec(&mut rng, hid);
        let u = rand_vec(&mut rng, hid);
        let v = rand_vec(&mut rng, hid);

        let (_, _, cache) = lstm_cell_forward(&x, &h, &c, &w).unwrap();
        let mut acc = w.zeros_like();
        let g = lstm_cell_backward(&u, &v, &cache, &w, &mut acc).unwrap();

        let mut theta = flatten(&w);
        theta.extend(&x);
        theta.extend(&h);
        theta.extend(&c);
        let mut analytic = flatten(&acc);
        analytic.extend(&g.dx);
        analytic.extend(&g.dh_prev);
        analytic.extend(&g.dc_prev);

        let nw = flatten(&w).len();
        let err = grad_check(&theta, &analytic, 1e-5, |t| {
            let mut w2 = w.clone();
            unflatten(&mut w2, &t[..nw]);
            let x2 = &t[nw..nw + inp];
            let h2 = &t[nw + inp..nw + inp + hid];
            let c2 = &t[nw + inp + hid..];
            let (hn, cn, _) = lstm_cell_forward(x2, h2, c2, &w2).unwrap();
            crate::numerics::dot(&u, &hn) + crate::numerics::dot(&v, &cn)
        })
        .unwrap();
        assert!(err < 1e-6, "peepholes={peep} seed={seed} err={err}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..10 {
            check_cell(false, seed);
            check_cell(true, 100 + seed);
        }
    }
}
