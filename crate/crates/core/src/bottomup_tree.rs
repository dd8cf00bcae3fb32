//! Bottom-up constituency Tree LSTM with head-lexicon propagation.
//!
//! Every node carries a head-lexicon vector `x` in embedding space. Leaves
//! use their (possibly dropped-out) word vector; branches combine the two
//! children's heads with one of the [`HeadStrategy`] rules. In lexicalized
//! mode the branch head also enters every gate and the candidate cell.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamSet, Var};
use crate::error::{Error, Result};
use crate::treebank::{BinaryTree, NodeKind};

/// How a branch obtains its head vector from its children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadStrategy {
    /// Left child's head.
    #[serde(rename = "L")]
    Left,
    /// Right child's head.
    #[serde(rename = "R")]
    Right,
    /// Mean of both heads.
    #[serde(rename = "A")]
    Average,
    /// Learned sigmoid gate over both heads.
    #[serde(rename = "G")]
    Gated,
}

impl HeadStrategy {
    pub const ALL: [HeadStrategy; 4] = [
        HeadStrategy::Left,
        HeadStrategy::Right,
        HeadStrategy::Average,
        HeadStrategy::Gated,
    ];

    pub fn code(self) -> &'static str {
        match self {
            HeadStrategy::Left => "L",
            HeadStrategy::Right => "R",
            HeadStrategy::Average => "A",
            HeadStrategy::Gated => "G",
        }
    }
}

impl fmt::Display for HeadStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for HeadStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" | "left" => Ok(HeadStrategy::Left),
            "R" | "r" | "right" => Ok(HeadStrategy::Right),
            "A" | "a" | "average" => Ok(HeadStrategy::Average),
            "G" | "g" | "gated" => Ok(HeadStrategy::Gated),
            _ => Err(Error::Config(format!("unknown head strategy {s:?} (L, R, A or G)"))),
        }
    }
}

/// Branch-cell weights shared by the baseline and lexicalized cells.
#[derive(Clone, Debug)]
pub struct BranchParams {
    pub w_hi_l: ParamId,
    pub w_hi_r: ParamId,
    pub w_ci_l: ParamId,
    pub w_ci_r: ParamId,
    pub b_i: ParamId,
    pub w_ho_l: ParamId,
    pub w_ho_r: ParamId,
    pub w_co: ParamId,
    pub b_o: ParamId,
    pub w_hfl_l: ParamId,
    pub w_hfl_r: ParamId,
    pub w_cfl_l: ParamId,
    pub w_cfl_r: ParamId,
    pub b_fl: ParamId,
    pub w_hfr_l: ParamId,
    pub w_hfr_r: ParamId,
    pub w_cfr_l: ParamId,
    pub w_cfr_r: ParamId,
    pub b_fr: ParamId,
    pub w_hg_l: ParamId,
    pub w_hg_r: ParamId,
    pub b_g: ParamId,
}

/// Head-vector projections added to the branch gates.
#[derive(Clone, Debug)]
pub struct LexParams {
    pub w_xi: ParamId,
    /// Used by the left forget gate, and by the right one too unless
    /// `w_xf_right` is set.
    pub w_xf: ParamId,
    pub w_xf_right: Option<ParamId>,
    pub w_xo: ParamId,
    pub w_xg: ParamId,
}

#[derive(Clone, Debug)]
pub struct HeadGateParams {
    pub w_zx_l: ParamId,
    pub w_zx_r: ParamId,
    pub b_z: ParamId,
}

impl HeadGateParams {
    /// With `zero_init` the weights start at zero and no random numbers
    /// are drawn, so strategy G starts out identical to A.
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, input_dim: usize, zero_init: bool, rng: &mut R) -> Result<Self> {
        let e = input_dim;
        let mut w = |n: &str| {
            let name = format!("{prefix}.{n}");
            if zero_init {
                params.add_zero_matrix(name, e, e)
            } else {
                params.add_matrix(name, e, e, rng)
            }
        };
        let w_zx_l = w("w_zx_l")?;
        let w_zx_r = w("w_zx_r")?;
        Ok(HeadGateParams {
            w_zx_l,
            w_zx_r,
            b_z: params.add_bias(format!("{prefix}.b_z"), e)?,
        })
    }

    pub fn ids(&self) -> [ParamId; 3] {
        [self.w_zx_l, self.w_zx_r, self.b_z]
    }
}

#[derive(Clone, Debug)]
pub struct LeafParams {
    pub w_xi: ParamId,
    pub w_xo: ParamId,
    pub w_xg: ParamId,
    pub w_co: ParamId,
    pub b_i: ParamId,
    pub b_o: ParamId,
    pub b_g: ParamId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeUpOptions {
    pub lexicalized: bool,
    /// Separate `W_xf` for the right forget gate.
    pub split_forget: bool,
}

#[derive(Clone, Debug)]
pub struct TreeUpParams {
    pub leaf: LeafParams,
    pub branch: BranchParams,
    pub lex: Option<LexParams>,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl TreeUpParams {
    /// Registers leaf, branch and (optionally) lexical tensors. The head
    /// gate is a separate group, see [`HeadGateParams`].
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        opts: TreeUpOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let (e, d) = (input_dim, hidden_dim);
        let leaf = LeafParams {
            w_xi: params.add_matrix(format!("{prefix}.leaf.w_xi"), d, e, rng)?,
            w_xo: params.add_matrix(format!("{prefix}.leaf.w_xo"), d, e, rng)?,
            w_xg: params.add_matrix(format!("{prefix}.leaf.w_xg"), d, e, rng)?,
            w_co: params.add_matrix(format!("{prefix}.leaf.w_co"), d, d, rng)?,
            b_i: params.add_bias(format!("{prefix}.leaf.b_i"), d)?,
            b_o: params.add_bias(format!("{prefix}.leaf.b_o"), d)?,
            b_g: params.add_bias(format!("{prefix}.leaf.b_g"), d)?,
        };
        let mut m = |n: &str| params.add_matrix(format!("{prefix}.branch.{n}"), d, d, rng);
        let w_hi_l = m("w_hi_l")?;
        let w_hi_r = m("w_hi_r")?;
        let w_ci_l = m("w_ci_l")?;
        let w_ci_r = m("w_ci_r")?;
        let w_ho_l = m("w_ho_l")?;
        let w_ho_r = m("w_ho_r")?;
        let w_co = m("w_co")?;
        let w_hfl_l = m("w_hfl_l")?;
        let w_hfl_r = m("w_hfl_r")?;
        let w_cfl_l = m("w_cfl_l")?;
        let w_cfl_r = m("w_cfl_r")?;
        let w_hfr_l = m("w_hfr_l")?;
        let w_hfr_r = m("w_hfr_r")?;
        let w_cfr_l = m("w_cfr_l")?;
        let w_cfr_r = m("w_cfr_r")?;
        let w_hg_l = m("w_hg_l")?;
        let w_hg_r = m("w_hg_r")?;
        let mut b = |n: &str| params.add_bias(format!("{prefix}.branch.{n}"), d);
        let branch = BranchParams {
            w_hi_l,
            w_hi_r,
            w_ci_l,
            w_ci_r,
            b_i: b("b_i")?,
            w_ho_l,
            w_ho_r,
            w_co,
            b_o: b("b_o")?,
            w_hfl_l,
            w_hfl_r,
            w_cfl_l,
            w_cfl_r,
            b_fl: b("b_fl")?,
            w_hfr_l,
            w_hfr_r,
            w_cfr_l,
            w_cfr_r,
            b_fr: b("b_fr")?,
            w_hg_l,
            w_hg_r,
            b_g: b("b_g")?,
        };
        let lex = if opts.lexicalized {
            let mut x = |n: &str| params.add_matrix(format!("{prefix}.lex.{n}"), d, e, rng);
            Some(LexParams {
                w_xi: x("w_xi")?,
                w_xf: x("w_xf")?,
                w_xf_right: if opts.split_forget { Some(x("w_xf_right")?) } else { None },
                w_xo: x("w_xo")?,
                w_xg: x("w_xg")?,
            })
        } else {
            None
        };
        Ok(TreeUpParams {
            leaf,
            branch,
            lex,
            input_dim,
            hidden_dim,
        })
    }
}

/// Bottom-up state of one node.
#[derive(Clone, Copy, Debug)]
pub struct UpNodeState {
    pub h: Var,
    pub c: Var,
    /// Head-lexicon vector (`None` when heads are not propagated).
    pub x: Option<Var>,
    /// Head-gate activation at gated branches.
    pub z: Option<Var>,
}

/// `c = i*g` from the word vector alone; `o` peeks at the new cell.
pub fn leaf_step(g: &mut Graph<'_>, x: Var, p: &TreeUpParams) -> Result<UpNodeState> {
    let l = &p.leaf;
    let [w_xi, w_xo, w_xg, w_co, b_i, b_o, b_g] =
        [l.w_xi, l.w_xo, l.w_xg, l.w_co, l.b_i, l.b_o, l.b_g].map(|id| g.param(id));
    let g_pre = g.affine(&[(w_xg, x)], Some(b_g))?;
    let g_t = g.tanh(g_pre);
    let i_pre = g.affine(&[(w_xi, x)], Some(b_i))?;
    let i_t = g.sigmoid(i_pre);
    let c = g.hadamard(i_t, g_t)?;
    let o_pre = g.affine(&[(w_xo, x), (w_co, c)], Some(b_o))?;
    let o_t = g.sigmoid(o_pre);
    let tc = g.tanh(c);
    let h = g.hadamard(o_t, tc)?;
    Ok(UpNodeState { h, c, x: Some(x), z: None })
}

/// Gated convex combination of two head vectors; returns `(x, z)`.
pub fn head_combine(g: &mut Graph<'_>, x_l: Var, x_r: Var, gate: &HeadGateParams) -> Result<(Var, Var)> {
    let (wl, wr, b) = (g.param(gate.w_zx_l), g.param(gate.w_zx_r), g.param(gate.b_z));
    let z_pre = g.affine(&[(wl, x_l), (wr, x_r)], Some(b))?;
    let z = g.sigmoid(z_pre);
    let from_l = g.hadamard(z, x_l)?;
    let not_z = g.one_minus(z);
    let from_r = g.hadamard(not_z, x_r)?;
    let x = g.add(from_l, from_r)?;
    Ok((x, z))
}

/// Head vector of a branch; the gate activation is returned for `G`.
pub fn select_head(
    g: &mut Graph<'_>,
    strategy: HeadStrategy,
    x_l: Var,
    x_r: Var,
    gate: Option<&HeadGateParams>,
) -> Result<(Var, Option<Var>)> {
    match strategy {
        HeadStrategy::Left => Ok((x_l, None)),
        HeadStrategy::Right => Ok((x_r, None)),
        HeadStrategy::Average => {
            let s = g.add(x_l, x_r)?;
            Ok((g.scale(s, 0.5), None))
        }
        HeadStrategy::Gated => {
            let gate = gate.ok_or_else(|| Error::Config("strategy G needs head gate parameters".into()))?;
            let (x, z) = head_combine(g, x_l, x_r, gate)?;
            Ok((x, Some(z)))
        }
    }
}

/// Binary cell: `c = f_l*c_l + f_r*c_r + i*g`, `h = o*tanh(c)`.
///
/// With `lexicalized`, `x_t` enters i, both forget gates, o and g; the
/// head term is accumulated first so zeroed head projections reproduce
/// the baseline cell bit for bit.
pub fn branch_step(
    g: &mut Graph<'_>,
    x_t: Option<Var>,
    left: &UpNodeState,
    right: &UpNodeState,
    p: &TreeUpParams,
    lexicalized: bool,
) -> Result<UpNodeState> {
    let b = &p.branch;
    let lex = if lexicalized {
        let lex = p
            .lex
            .as_ref()
            .ok_or_else(|| Error::Config("lexicalized step without lexical parameters".into()))?;
        let x = x_t.ok_or_else(|| Error::Invalid("lexicalized step needs a head vector".into()))?;
        Some((lex, x))
    } else {
        None
    };
    let (hl, hr, cl, cr) = (left.h, right.h, left.c, right.c);
    let mut pv = |id: ParamId| g.param(id);
    let (w_hi_l, w_hi_r, w_ci_l, w_ci_r, b_i) = (pv(b.w_hi_l), pv(b.w_hi_r), pv(b.w_ci_l), pv(b.w_ci_r), pv(b.b_i));
    let (w_ho_l, w_ho_r, w_co, b_o) = (pv(b.w_ho_l), pv(b.w_ho_r), pv(b.w_co), pv(b.b_o));
    let (w_hfl_l, w_hfl_r, w_cfl_l, w_cfl_r, b_fl) =
        (pv(b.w_hfl_l), pv(b.w_hfl_r), pv(b.w_cfl_l), pv(b.w_cfl_r), pv(b.b_fl));
    let (w_hfr_l, w_hfr_r, w_cfr_l, w_cfr_r, b_fr) =
        (pv(b.w_hfr_l), pv(b.w_hfr_r), pv(b.w_cfr_l), pv(b.w_cfr_r), pv(b.b_fr));
    let (w_hg_l, w_hg_r, b_g) = (pv(b.w_hg_l), pv(b.w_hg_r), pv(b.b_g));

    let lex_term = |g: &mut Graph<'_>, pick: fn(&LexParams) -> ParamId| -> Vec<(Var, Var)> {
        match lex {
            Some((l, x)) => vec![(g.param(pick(l)), x)],
            None => Vec::new(),
        }
    };
    let with = |mut head: Vec<(Var, Var)>, rest: &[(Var, Var)]| {
        head.extend_from_slice(rest);
        head
    };

    let t = lex_term(g, |l| l.w_xi);
    let i_pre = g.affine(&with(t, &[(w_hi_l, hl), (w_hi_r, hr), (w_ci_l, cl), (w_ci_r, cr)]), Some(b_i))?;
    let i_t = g.sigmoid(i_pre);

    let t = lex_term(g, |l| l.w_xf);
    let fl_pre = g.affine(&with(t, &[(w_hfl_l, hl), (w_hfl_r, hr), (w_cfl_l, cl), (w_cfl_r, cr)]), Some(b_fl))?;
    let f_l = g.sigmoid(fl_pre);

    let t = lex_term(g, |l| l.w_xf_right.unwrap_or(l.w_xf));
    let fr_pre = g.affine(&with(t, &[(w_hfr_l, hl), (w_hfr_r, hr), (w_cfr_l, cl), (w_cfr_r, cr)]), Some(b_fr))?;
    let f_r = g.sigmoid(fr_pre);

    let t = lex_term(g, |l| l.w_xg);
    let g_pre = g.affine(&with(t, &[(w_hg_l, hl), (w_hg_r, hr)]), Some(b_g))?;
    let g_t = g.tanh(g_pre);

    let keep_l = g.hadamard(f_l, cl)?;
    let keep_r = g.hadamard(f_r, cr)?;
    let write = g.hadamard(i_t, g_t)?;
    let kept = g.add(keep_l, keep_r)?;
    let c = g.add(kept, write)?;

    let t = lex_term(g, |l| l.w_xo);
    let o_pre = g.affine(&with(t, &[(w_ho_l, hl), (w_ho_r, hr), (w_co, c)]), Some(b_o))?;
    let o_t = g.sigmoid(o_pre);
    let tc = g.tanh(c);
    let h = g.hadamard(o_t, tc)?;
    Ok(UpNodeState { h, c, x: x_t, z: None })
}

/// Post-order encoding. `leaf_inputs[k]` is the input vector of the k-th
/// token. Returns one state per node id. Heads are propagated whenever
/// `strategy` is given; they only enter the gates when `lexicalized`.
pub fn encode_up(
    g: &mut Graph<'_>,
    tree: &BinaryTree,
    leaf_inputs: &[Var],
    p: &TreeUpParams,
    strategy: Option<HeadStrategy>,
    gate: Option<&HeadGateParams>,
    lexicalized: bool,
) -> Result<Vec<UpNodeState>> {
    if leaf_inputs.len() != tree.num_leaves() {
        return Err(Error::shape(
            "encode_up",
            format!("{} leaf inputs for {} leaves", leaf_inputs.len(), tree.num_leaves()),
        ));
    }
    if lexicalized && strategy.is_none() {
        return Err(Error::Config("lexicalized encoding needs a head strategy".into()));
    }
    let mut states: Vec<Option<UpNodeState>> = vec![None; tree.len()];
    for id in tree.post_order() {
        let node = tree.node(id);
        let state = match node.kind {
            NodeKind::Leaf { .. } => {
                let mut s = leaf_step(g, leaf_inputs[node.span.0], p)?;
                if strategy.is_none() {
                    s.x = None;
                }
                s
            }
            NodeKind::Branch { left, right } => {
                let l = states[left].expect("post-order visits children first");
                let r = states[right].expect("post-order visits children first");
                let (x, z) = match (strategy, l.x, r.x) {
                    (Some(s), Some(xl), Some(xr)) => {
                        let (x, z) = select_head(g, s, xl, xr, gate)?;
                        (Some(x), z)
                    }
                    _ => (None, None),
                };
                let mut s = branch_step(g, x, &l, &r, p, lexicalized)?;
                s.z = z;
                s
            }
        };
        states[id] = Some(state);
    }
    Ok(states.into_iter().map(|s| s.expect("every node visited")).collect())
}

/// Head vectors only (no LSTM), for encoders that need heads without
/// bottom-up states.
pub fn propagate_heads(
    g: &mut Graph<'_>,
    tree: &BinaryTree,
    leaf_inputs: &[Var],
    strategy: HeadStrategy,
    gate: Option<&HeadGateParams>,
) -> Result<Vec<(Var, Option<Var>)>> {
    if leaf_inputs.len() != tree.num_leaves() {
        return Err(Error::shape(
            "propagate_heads",
            format!("{} leaf inputs for {} leaves", leaf_inputs.len(), tree.num_leaves()),
        ));
    }
    let mut heads: Vec<Option<(Var, Option<Var>)>> = vec![None; tree.len()];
    for id in tree.post_order() {
        let node = tree.node(id);
        heads[id] = Some(match node.kind {
            NodeKind::Leaf { .. } => (leaf_inputs[node.span.0], None),
            NodeKind::Branch { left, right } => {
                let xl = heads[left].expect("post-order").0;
                let xr = heads[right].expect("post-order").0;
                select_head(g, strategy, xl, xr, gate)?
            }
        });
    }
    Ok(heads.into_iter().map(|h| h.expect("every node visited")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LEX: TreeUpOptions = TreeUpOptions {
        lexicalized: true,
        split_forget: false,
    };

    fn build(opts: TreeUpOptions, e: usize, d: usize, seed: u64) -> (ParamSet, TreeUpParams, HeadGateParams) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = TreeUpParams::new(&mut ps, "up", e, d, opts, &mut rng).unwrap();
        let gate = HeadGateParams::new(&mut ps, "gate", e, false, &mut rng).unwrap();
        (ps, p, gate)
    }

    fn zero_all(ps: &mut ParamSet) {
        for id in ps.ids().collect::<Vec<_>>() {
            ps.get_mut(id).values_mut().fill(0.0);
        }
    }

    #[test]
    fn leaf_with_zero_params_is_zero_and_keeps_head() {
        let (mut ps, p, _) = build(LEX, 3, 2, 0);
        zero_all(&mut ps);
        let mut g = Graph::new(&ps);
        let x = g.vector(vec![0.3, -1.0, 2.0]);
        let s = leaf_step(&mut g, x, &p).unwrap();
        assert_eq!(g.value(s.c), &[0.0, 0.0]);
        assert_eq!(g.value(s.h), &[0.0, 0.0]);
        assert_eq!(s.x, Some(x));
    }

    #[test]
    fn leaf_saturates_with_large_biases() {
        let (mut ps, p, _) = build(LEX, 3, 2, 0);
        zero_all(&mut ps);
        ps.get_mut(p.leaf.b_i).values_mut().fill(10.0);
        ps.get_mut(p.leaf.b_g).values_mut().fill(10.0);
        let mut g = Graph::new(&ps);
        let x = g.vector(vec![0.3, -1.0, 2.0]);
        let s = leaf_step(&mut g, x, &p).unwrap();
        let want = 10f64.tanh() * crate::autodiff::sigmoid(10.0);
        for c in g.value(s.c) {
            assert!((c - want).abs() < 1e-15);
            assert!((c - 0.99995).abs() < 1e-5);
        }
    }

    #[test]
    fn head_combine_with_zero_gate_averages() {
        let (mut ps, _, gate) = build(LEX, 2, 2, 0);
        zero_all(&mut ps);
        let mut g = Graph::new(&ps);
        let xl = g.vector(vec![1.0, 0.0]);
        let xr = g.vector(vec![0.0, 1.0]);
        let (x, z) = head_combine(&mut g, xl, xr, &gate).unwrap();
        assert_eq!(g.value(z), &[0.5, 0.5]);
        assert_eq!(g.value(x), &[0.5, 0.5]);
    }

    #[test]
    fn saturated_gate_copies_left_head() {
        let (mut ps, _, gate) = build(LEX, 2, 2, 0);
        zero_all(&mut ps);
        ps.get_mut(gate.b_z).values_mut().fill(20.0);
        let mut g = Graph::new(&ps);
        let xl = g.vector(vec![1.5, -2.0]);
        let xr = g.vector(vec![-0.5, 3.0]);
        let (x, _) = head_combine(&mut g, xl, xr, &gate).unwrap();
        for ((x, l), r) in g.value(x).iter().zip([1.5, -2.0]).zip([-0.5, 3.0]) {
            assert!((x - l).abs() < 1e-8 * (l - r).abs());
        }
    }

    #[test]
    fn select_head_rules() {
        let (mut ps, _, gate) = build(LEX, 2, 2, 0);
        zero_all(&mut ps);
        let mut g = Graph::new(&ps);
        let xl = g.vector(vec![2.0, 0.0]);
        let xr = g.vector(vec![0.0, 2.0]);
        let (a, _) = select_head(&mut g, HeadStrategy::Average, xl, xr, Some(&gate)).unwrap();
        assert_eq!(g.value(a), &[1.0, 1.0]);
        let (l, _) = select_head(&mut g, HeadStrategy::Left, xl, xr, Some(&gate)).unwrap();
        assert_eq!(l, xl);
        let (r, _) = select_head(&mut g, HeadStrategy::Right, xl, xr, Some(&gate)).unwrap();
        assert_eq!(r, xr);
        let (gz, z) = select_head(&mut g, HeadStrategy::Gated, xl, xr, Some(&gate)).unwrap();
        assert_eq!(g.value(gz), g.value(a));
        assert!(z.is_some());
    }

    #[test]
    fn branch_with_zero_params() {
        let (mut ps, p, _) = build(LEX, 2, 3, 0);
        zero_all(&mut ps);
        let mut g = Graph::new(&ps);
        let zero = g.zeros(3);
        let x = g.vector(vec![1.0, 1.0]);
        let l = UpNodeState { h: zero, c: zero, x: Some(x), z: None };
        let s = branch_step(&mut g, Some(x), &l, &l, &p, true).unwrap();
        assert!(g.value(s.h).iter().chain(g.value(s.c)).all(|v| *v == 0.0));

        let one = g.vector(vec![1.0; 3]);
        let l = UpNodeState { h: zero, c: one, x: Some(x), z: None };
        let r = UpNodeState { h: zero, c: zero, x: Some(x), z: None };
        let s = branch_step(&mut g, Some(x), &l, &r, &p, false).unwrap();
        assert_eq!(g.value(s.c), &[0.5; 3]);
        let want = 0.5 * 0.5f64.tanh();
        assert!(g.value(s.h).iter().all(|h| (h - want).abs() < 1e-15));
    }

    #[test]
    fn lexicalized_step_requires_head() {
        let (ps, p, _) = build(LEX, 2, 3, 0);
        let mut g = Graph::new(&ps);
        let zero = g.zeros(3);
        let l = UpNodeState { h: zero, c: zero, x: None, z: None };
        assert!(branch_step(&mut g, None, &l, &l, &p, true).is_err());
    }

    #[test]
    fn head_strategy_parsing() {
        for s in HeadStrategy::ALL {
            assert_eq!(s.code().parse::<HeadStrategy>().unwrap(), s);
        }
        assert!("Q".parse::<HeadStrategy>().is_err());
    }
}
