//! Peephole sequential LSTM and its bidirectional wrapper.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Var};
use crate::error::{Error, Result};

/// Weights of one peephole LSTM cell. Peepholes are full `[d x d]`
/// matrices.
#[derive(Clone, Debug)]
pub struct SeqParams {
    pub w_xg: ParamId,
    pub w_hg: ParamId,
    pub b_g: ParamId,
    pub w_xi: ParamId,
    pub w_hi: ParamId,
    pub w_ci: ParamId,
    pub b_i: ParamId,
    pub w_xf: ParamId,
    pub w_hf: ParamId,
    pub w_cf: ParamId,
    pub b_f: ParamId,
    pub w_xo: ParamId,
    pub w_ho: ParamId,
    pub w_co: ParamId,
    pub b_o: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl SeqParams {
    /// Registers the cell's tensors as `{prefix}.w_xg`, `{prefix}.b_g`, ...
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Result<Self> {
        let (e, d) = (input_dim, hidden_dim);
        let mut m = |n: &str, c: usize| params.add_matrix(format!("{prefix}.{n}"), d, c, rng);
        let w_xg = m("w_xg", e)?;
        let w_hg = m("w_hg", d)?;
        let w_xi = m("w_xi", e)?;
        let w_hi = m("w_hi", d)?;
        let w_ci = m("w_ci", d)?;
        let w_xf = m("w_xf", e)?;
        let w_hf = m("w_hf", d)?;
        let w_cf = m("w_cf", d)?;
        let w_xo = m("w_xo", e)?;
        let w_ho = m("w_ho", d)?;
        let w_co = m("w_co", d)?;
        let mut b = |n: &str| params.add_bias(format!("{prefix}.{n}"), d);
        Ok(SeqParams {
            w_xg,
            w_hg,
            b_g: b("b_g")?,
            w_xi,
            w_hi,
            w_ci,
            b_i: b("b_i")?,
            w_xf,
            w_hf,
            w_cf,
            b_f: b("b_f")?,
            w_xo,
            w_ho,
            w_co,
            b_o: b("b_o")?,
            input_dim,
            hidden_dim,
        })
    }

    pub fn ids(&self) -> [ParamId; 15] {
        [
            self.w_xg, self.w_hg, self.b_g, self.w_xi, self.w_hi, self.w_ci, self.b_i, self.w_xf,
            self.w_hf, self.w_cf, self.b_f, self.w_xo, self.w_ho, self.w_co, self.b_o,
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SeqState {
    pub h: Var,
    pub c: Var,
}

pub fn zero_state(g: &mut Graph<'_>, hidden: usize) -> SeqState {
    SeqState {
        h: g.zeros(hidden),
        c: g.zeros(hidden),
    }
}

/// Which cell value feeds the `g` pre-activation and the output `tanh`.
///
/// `Standard` is the usual cell. `Literal` reads the input from a separate
/// (previous) vector for `g` and squashes the *previous* cell into `h`; the
/// top-down tree encoder exposes it for comparison runs.
#[derive(Clone, Copy, Debug)]
pub(crate) enum CellInputs {
    Standard,
    Literal { g_input: Var },
}

pub(crate) fn cell(g: &mut Graph<'_>, x: Var, prev: &SeqState, p: &SeqParams, mode: CellInputs) -> Result<SeqState> {
    let [w_xg, w_hg, b_g, w_xi, w_hi, w_ci, b_i, w_xf, w_hf, w_cf, b_f, w_xo, w_ho, w_co, b_o] =
        p.ids().map(|id| g.param(id));
    let gx = match mode {
        CellInputs::Standard => x,
        CellInputs::Literal { g_input } => g_input,
    };
    let g_pre = g.affine(&[(w_xg, gx), (w_hg, prev.h)], Some(b_g))?;
    let g_t = g.tanh(g_pre);
    let i_pre = g.affine(&[(w_xi, x), (w_hi, prev.h), (w_ci, prev.c)], Some(b_i))?;
    let i_t = g.sigmoid(i_pre);
    let f_pre = g.affine(&[(w_xf, x), (w_hf, prev.h), (w_cf, prev.c)], Some(b_f))?;
    let f_t = g.sigmoid(f_pre);
    let keep = g.hadamard(f_t, prev.c)?;
    let write = g.hadamard(i_t, g_t)?;
    let c = g.add(keep, write)?;
    let o_pre = g.affine(&[(w_xo, x), (w_ho, prev.h), (w_co, c)], Some(b_o))?;
    let o_t = g.sigmoid(o_pre);
    let squashed = match mode {
        CellInputs::Standard => g.tanh(c),
        CellInputs::Literal { .. } => g.tanh(prev.c),
    };
    let h = g.hadamard(o_t, squashed)?;
    Ok(SeqState { h, c })
}

/// One LSTM step: `c = f*c_prev + i*g`, `h = o*tanh(c)`, with `i`, `f`
/// peeking at `c_prev` and `o` at the new `c`.
pub fn step(g: &mut Graph<'_>, x: Var, prev: &SeqState, p: &SeqParams) -> Result<SeqState> {
    cell(g, x, prev, p, CellInputs::Standard)
}

/// Runs left to right from the zero state.
pub fn run(g: &mut Graph<'_>, xs: &[Var], p: &SeqParams) -> Result<Vec<SeqState>> {
    let mut state = zero_state(g, p.hidden_dim);
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        state = step(g, x, &state, p)?;
        out.push(state);
    }
    Ok(out)
}

/// Forward and backward passes with independent weights; position `i`
/// yields the forward state at `i` concatenated with the backward state
/// that consumed `x_i`.
pub fn run_bidirectional(g: &mut Graph<'_>, xs: &[Var], fwd: &SeqParams, bwd: &SeqParams) -> Result<Vec<Var>> {
    let (fw, bw) = run_both(g, xs, fwd, bwd)?;
    let n = xs.len();
    (0..n)
        .map(|i| g.concat(&[fw[i].h, bw[n - 1 - i].h]))
        .collect()
}

/// Forward states, and backward states in the backward pass's own order
/// (index 0 consumed `x_{n-1}`).
pub(crate) fn run_both(g: &mut Graph<'_>, xs: &[Var], fwd: &SeqParams, bwd: &SeqParams) -> Result<(Vec<SeqState>, Vec<SeqState>)> {
    if xs.is_empty() {
        return Err(Error::Invalid("empty sequence".into()));
    }
    let fw = run(g, xs, fwd)?;
    let rev: Vec<Var> = xs.iter().rev().copied().collect();
    let bw = run(g, &rev, bwd)?;
    Ok((fw, bw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, DEFAULT_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(e: usize, d: usize) -> (ParamSet, SeqParams) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = SeqParams::new(&mut ps, "s", e, d, &mut rng).unwrap();
        for id in p.ids() {
            ps.get_mut(id).values_mut().fill(0.0);
        }
        (ps, p)
    }

    #[test]
    fn zero_params_from_zero_state_stay_zero() {
        let (ps, p) = zeroed(3, 2);
        let mut g = Graph::new(&ps);
        let x = g.vector(vec![1.0, -2.0, 0.5]);
        let s0 = zero_state(&mut g, 2);
        let s = step(&mut g, x, &s0, &p).unwrap();
        assert_eq!(g.value(s.h), &[0.0, 0.0]);
        assert_eq!(g.value(s.c), &[0.0, 0.0]);
    }

    #[test]
    fn zero_params_halve_unit_cell() {
        let (ps, p) = zeroed(3, 2);
        let mut g = Graph::new(&ps);
        let x = g.vector(vec![1.0, -2.0, 0.5]);
        let prev = SeqState {
            h: g.vector(vec![0.3, -0.7]),
            c: g.vector(vec![1.0, 1.0]),
        };
        let s = step(&mut g, x, &prev, &p).unwrap();
        assert_eq!(g.value(s.c), &[0.5, 0.5]);
        let want = 0.5 * 0.5f64.tanh();
        assert!(g.value(s.h).iter().all(|h| (h - want).abs() < 1e-15));
        assert!((want - 0.23105).abs() < 1e-5);
    }

    #[test]
    fn step_rejects_wrong_input_dim() {
        let (ps, p) = zeroed(3, 2);
        let mut g = Graph::new(&ps);
        let x = g.vector(vec![1.0, 2.0]);
        let s0 = zero_state(&mut g, 2);
        assert!(step(&mut g, x, &s0, &p).is_err());
    }

    #[test]
    fn bidirectional_single_element() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fwd = SeqParams::new(&mut ps, "f", 3, 2, &mut rng).unwrap();
        let bwd = SeqParams::new(&mut ps, "b", 3, 2, &mut rng).unwrap();
        let mut g = Graph::new(&ps);
        let x = g.vector(vec![0.2, -0.4, 0.9]);
        let out = run_bidirectional(&mut g, &[x], &fwd, &bwd).unwrap();
        let z = zero_state(&mut g, 2);
        let f = step(&mut g, x, &z, &fwd).unwrap();
        let b = step(&mut g, x, &z, &bwd).unwrap();
        let mut want = g.value(f.h).to_vec();
        want.extend_from_slice(g.value(b.h));
        assert_eq!(g.value(out[0]), want.as_slice());
    }

    #[test]
    fn bidirectional_palindrome_with_shared_weights_mirrors() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = SeqParams::new(&mut ps, "s", 2, 3, &mut rng).unwrap();
        let mut g = Graph::new(&ps);
        let a = g.vector(vec![0.5, -1.0]);
        let b = g.vector(vec![-0.3, 0.8]);
        let xs = [a, b, a];
        let out = run_bidirectional(&mut g, &xs, &p, &p).unwrap();
        for i in 0..3 {
            let lhs = g.value(out[i]);
            let rhs = g.value(out[2 - i]);
            assert_eq!(&lhs[..3], &rhs[3..]);
            assert_eq!(&lhs[3..], &rhs[..3]);
        }
    }

    #[test]
    fn bidirectional_rejects_empty() {
        let (ps, p) = zeroed(2, 2);
        let mut g = Graph::new(&ps);
        assert!(run_bidirectional(&mut g, &[], &p, &p).is_err());
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let (ps, p) = zeroed(2, 2);
        let mut g = Graph::new(&ps);
        let xs: Vec<Var> = (0..4).map(|i| g.vector(vec![i as f64, 1.0])).collect();
        for o in run_bidirectional(&mut g, &xs, &p, &p).unwrap() {
            assert!(g.value(o).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn step_gradients_match_finite_differences() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = SeqParams::new(&mut ps, "s", 4, 4, &mut rng).unwrap();
        for id in [p.b_g, p.b_i, p.b_f, p.b_o] {
            ps.get_mut(id).values_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let report = grad_check(
            &ps,
            |g| {
                let vs: Vec<Var> = xs.iter().map(|x| g.vector(x.clone())).collect();
                let states = run(g, &vs, &p)?;
                let hs: Vec<Var> = states.iter().map(|s| s.h).collect();
                let cat = g.concat(&hs)?;
                let t = g.tanh(cat);
                let w = g.vector((0..12).map(|i| (i as f64 * 0.37).sin()).collect());
                let prod = g.hadamard(t, w)?;
                Ok(g.sum(prod))
            },
            DEFAULT_EPS,
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "{report:?}");
    }
}
