use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Variant};
use crate::autodiff::ParamKind;
use crate::error::Result;
use crate::treebank::Vocabulary;

/// Published totals at e=300, d=150 (lookup table excluded), for
/// side-by-side reporting.
pub const REFERENCE_COUNTS: [(Variant, usize); 3] = [
    (Variant::ConTree, 538_223),
    (Variant::ConTreeLex, 763_523),
    (Variant::BiConTree, 1_297_523),
];

/// Trainable scalars outside the lookup table, grouped by tensor prefix
/// (`up.branch`, `down.left`, `classifier`, ...).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub groups: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    pub fn reference(variant: Variant) -> Option<usize> {
        REFERENCE_COUNTS.iter().find(|(v, _)| *v == variant).map(|(_, n)| *n)
    }
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.groups.iter().map(|(g, _)| g.len()).max().unwrap_or(5).max(5);
        for (g, n) in &self.groups {
            writeln!(f, "{g:<width$}  {n:>10}")?;
        }
        write!(f, "{:<width$}  {:>10}", "total", self.total)
    }
}

pub fn count_params(config: &ModelConfig) -> Result<ParamCount> {
    let model = Model::new(config.clone(), Vocabulary::new(), None, &mut ChaCha8Rng::seed_from_u64(0))?;
    let ps = model.params();
    let mut groups: Vec<(String, usize)> = Vec::new();
    for id in ps.ids() {
        if ps.kind(id) == ParamKind::Embedding {
            continue;
        }
        let name = ps.name(id);
        let group = name.rsplit_once('.').map_or(name, |(g, _)| g);
        let n = ps.get(id).len();
        match groups.iter_mut().find(|(g, _)| g == group) {
            Some((_, c)) => *c += n,
            None => groups.push((group.to_string(), n)),
        }
    }
    let total = groups.iter().map(|(_, n)| n).sum();
    Ok(ParamCount { groups, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bottomup_tree::HeadStrategy;

    #[test]
    fn degenerate_dims_match_enumeration() {
        // e=d=l=k=1: every tensor has one scalar except W_hl, which is
        // [1 x D] with D = 1, 2 or 3 stacked states.
        let one = |v| ModelConfig::new(v, 1, 1, 1, 1);
        let tensors = |v: Variant| match v {
            Variant::BiLstm => 2 * 15 + 4,
            Variant::ConTree => 7 + 22 + 4,
            Variant::ConTreeLex => 7 + 22 + 4 + 4 + 3,
            Variant::TopDownConTree => 3 * 15 + 4 + 3,
            Variant::BiConTree => 7 + 22 + 4 + 3 * 15 + 4 + 3,
        };
        for v in Variant::ALL {
            let extra = one(v).repr_dim() - 1;
            assert_eq!(count_params(&one(v)).unwrap().total, tensors(v) + extra, "{v}");
        }
    }

    #[test]
    fn grows_with_hidden_size() {
        let a = count_params(&ModelConfig::new(Variant::ConTreeLex, 300, 75, 128, 5)).unwrap();
        let b = count_params(&ModelConfig::new(Variant::ConTreeLex, 300, 150, 128, 5)).unwrap();
        assert!(b.total > a.total);
    }

    #[test]
    fn hand_counts_at_full_size() {
        let (e, d, l, k) = (300, 150, 128, 5);
        let leaf = 3 * d * e + d * d + 3 * d;
        let branch = 17 * d * d + 5 * d;
        let lex = 4 * d * e;
        let gate = 2 * e * e + e;
        let cls = |dim: usize| l * dim + l + k * l + k;
        let seq = 4 * d * e + 7 * d * d + 4 * d;
        let c = |v| count_params(&ModelConfig::new(v, e, d, l, k)).unwrap().total;
        assert_eq!(c(Variant::ConTree), leaf + branch + cls(d));
        assert_eq!(c(Variant::ConTree), 561_173);
        assert_eq!(c(Variant::ConTreeLex), leaf + branch + lex + gate + cls(d));
        assert_eq!(c(Variant::BiConTree), leaf + branch + lex + gate + 3 * seq + cls(3 * d));
        assert_eq!(c(Variant::BiLstm), 2 * seq + cls(2 * d));
        let avg = ModelConfig::new(Variant::ConTreeLex, e, d, l, k).with_strategy(HeadStrategy::Average);
        assert_eq!(count_params(&avg).unwrap().total, leaf + branch + lex + cls(d));
    }
}
