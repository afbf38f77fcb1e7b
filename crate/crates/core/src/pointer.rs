//! Pointer scorers and label classifiers.

use crate::error::{Error, Result};
use crate::nn::{Biaffine, BiaffineKeys};
use crate::tensor::{argmax, Graph, Var};

pub use crate::corpus::LabelSet;

/// Attention over all positions of a sequence; masked positions have
/// probability 0 and score `-inf` in the log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult {
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
    /// Log-probabilities as a graph node, for losses.
    pub log_probs: Var,
}

impl AttentionResult {
    fn build(g: &mut Graph, scores: Var, mask: &[bool]) -> Result<Self> {
        let log_probs = g.log_softmax(scores, Some(mask))?;
        let probs = g
            .value(log_probs)
            .data()
            .iter()
            .zip(mask)
            .map(|(&l, &m)| if m { l.exp() } else { 0.0 })
            .collect();
        Ok(AttentionResult {
            scores: g.value(scores).data().to_vec(),
            probs,
            mask: mask.to_vec(),
            log_probs,
        })
    }

    /// First most probable candidate.
    pub fn argmax(&self) -> usize {
        let masked: Vec<f64> = self
            .probs
            .iter()
            .zip(&self.mask)
            .map(|(&p, &m)| if m { p } else { f64::NEG_INFINITY })
            .collect();
        argmax(&masked)
    }

    pub fn candidates(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn log_prob(&self, g: &Graph, index: usize) -> f64 {
        g.value(self.log_probs).data()[index]
    }
}

/// Biaffine pointer of decoder state `d` over prepared encoder keys.
pub fn point_biaffine(g: &mut Graph, scorer: &Biaffine, d: Var, keys: &BiaffineKeys, mask: &[bool]) -> Result<AttentionResult> {
    if mask.len() != keys.len {
        return Err(Error::InvalidMask(format!(
            "mask of length {} for {} candidates",
            mask.len(),
            keys.len
        )));
    }
    let scores = scorer.score_keys(g, d, keys)?;
    AttentionResult::build(g, scores, mask)
}

/// Dot-product pointer over EDU representations `edus` (`[m × dim]`) for
/// the 1-based span `[i, j]`; candidates are split points `k ∈ [i, j-1]`,
/// reported at position `k - 1`.
pub fn point_dot(g: &mut Graph, d: Var, edus: Var, span: (usize, usize)) -> Result<AttentionResult> {
    let (i, j) = span;
    let m = g.shape(edus)[0];
    if i < 1 || j > m || j < i + 2 {
        return Err(Error::Contract(format!(
            "pointing needs a span of at least 3 EDUs inside 1..={m}, got [{i}, {j}]"
        )));
    }
    let scores = g.matmul(edus, d)?;
    let mask: Vec<bool> = (1..=m).map(|k| k >= i && k < j).collect();
    AttentionResult::build(g, scores, &mask)
}

/// Label log-probabilities for the arc from the head with decoder state
/// `d` to dependent `dependent` of the prepared keys.
pub fn classify_dep_label(g: &mut Graph, classifier: &Biaffine, d: Var, keys: &BiaffineKeys, dependent: usize) -> Result<Var> {
    let s = classifier.score_key(g, d, keys, dependent)?;
    g.log_softmax(s, None)
}

/// Composite nuclearity-relation log-probabilities for a split whose left
/// part ends at `left_end` and right part ends at `right_end`.
pub fn classify_rst(g: &mut Graph, classifier: &Biaffine, left_end: Var, right_end: Var) -> Result<Var> {
    let s = classifier.score(g, left_end, right_end)?;
    g.log_softmax(s, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check::{check_param_gradients, random_tensor};
    use crate::tensor::{ParamStore, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_all(store: &mut ParamStore) {
        let ids: Vec<_> = store.iter().map(|(i, _)| i).collect();
        for i in ids {
            store.value_mut(i).data_mut().fill(0.0);
        }
    }

    fn softmax(v: &[f64]) -> Vec<f64> {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|x| x / s).collect()
    }

    #[test]
    fn biaffine_pointer_uniform_and_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let b = Biaffine::new(&mut store, "p", 3, 4, 5, 1, 0.0, &mut rng).unwrap();
        zero_all(&mut store);
        let mut g = Graph::new(&store);
        let d = g.constant(random_tensor(&[3], &mut rng));
        let h = g.constant(random_tensor(&[4, 4], &mut rng));
        let keys = b.prepare_keys(&mut g, h).unwrap();
        let mask = [true, false, true, true];
        let a = point_biaffine(&mut g, &b, d, &keys, &mask).unwrap();
        assert_eq!(a.probs[1], 0.0);
        for i in [0, 2, 3] {
            assert!((a.probs[i] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(point_biaffine(&mut g, &b, d, &keys, &[false; 4]).is_err());
    }

    #[test]
    fn biaffine_pointer_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let b = Biaffine::new(&mut store, "p", 3, 4, 6, 1, 0.0, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let d = g.constant(random_tensor(&[3], &mut rng));
        let rows: Vec<Tensor> = (0..5).map(|_| random_tensor(&[4], &mut rng)).collect();
        let hs: Vec<Var> = rows.iter().map(|r| g.constant(r.clone())).collect();
        let h = g.stack(&hs).unwrap();
        let keys = b.prepare_keys(&mut g, h).unwrap();
        let a = point_biaffine(&mut g, &b, d, &keys, &[true; 5]).unwrap();
        let mut loop_scores = Vec::new();
        for &hi in &hs {
            let s = b.score(&mut g, d, hi).unwrap();
            loop_scores.push(g.value(s).item());
        }
        let want = softmax(&loop_scores);
        for i in 0..5 {
            assert!((a.scores[i] - loop_scores[i]).abs() < 1e-12);
            assert!((a.probs[i] - want[i]).abs() < 1e-12);
        }
        let mut shifted = a.scores.clone();
        shifted.iter_mut().for_each(|s| *s += 7.0);
        let sp = softmax(&shifted);
        assert_eq!(crate::tensor::argmax(&sp), a.argmax());
    }

    #[test]
    fn dot_pointer() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let mut eye = vec![0.0; 16];
        for i in 0..4 {
            eye[i * 4 + i] = 1.0;
        }
        let e = g.constant(Tensor::matrix(4, 4, eye).unwrap());
        let zero = g.zeros(4);
        let a = point_dot(&mut g, zero, e, (1, 4)).unwrap();
        assert_eq!(a.candidates(), 3);
        assert!(a.probs[..3].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(a.probs[3], 0.0);
        let d = g.constant(Tensor::vector(vec![0.0, 1.0, 0.0, 0.0]));
        assert_eq!(point_dot(&mut g, d, e, (1, 4)).unwrap().argmax(), 1);
        assert!(matches!(point_dot(&mut g, d, e, (2, 3)), Err(Error::Contract(_))));
    }

    #[test]
    fn dot_pointer_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let et = random_tensor(&[6, 3], &mut rng);
        let dt = random_tensor(&[3], &mut rng);
        let e = g.constant(et.clone());
        let d = g.constant(dt.clone());
        let a = point_dot(&mut g, d, e, (2, 5)).unwrap();
        let s: Vec<f64> = (1..4)
            .map(|r| (0..3).map(|c| et.row(r)[c] * dt.data()[c]).sum())
            .collect();
        let want = softmax(&s);
        for (k, w) in want.iter().enumerate() {
            assert!((a.probs[k + 1] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn label_classifiers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let b = Biaffine::new(&mut store, "l", 3, 3, 4, 39, 0.0, &mut rng).unwrap();
        let mut zeroed = store.clone();
        zero_all(&mut zeroed);
        {
            let mut g = Graph::new(&zeroed);
            let x = g.constant(random_tensor(&[3], &mut rng));
            let y = g.constant(random_tensor(&[3], &mut rng));
            let lp = classify_rst(&mut g, &b, x, y).unwrap();
            assert!(g.value(lp).data().iter().all(|l| (l.exp() - 1.0 / 39.0).abs() < 1e-12));
        }
        let mut g = Graph::new(&store);
        let x = g.constant(random_tensor(&[3], &mut rng));
        let y = g.constant(random_tensor(&[3], &mut rng));
        let a = classify_rst(&mut g, &b, x, y).unwrap();
        let bsw = classify_rst(&mut g, &b, y, x).unwrap();
        assert_ne!(g.value(a), g.value(bsw));
        let lp = g.value(a).data().to_vec();
        let bias_shift = {
            let mut s = store.clone();
            s.value_mut(b.b).data_mut().iter_mut().for_each(|v| *v += 3.0);
            let mut g2 = Graph::new(&s);
            let x2 = g2.constant(g.value(x).clone());
            let y2 = g2.constant(g.value(y).clone());
            let r = classify_rst(&mut g2, &b, x2, y2).unwrap();
            crate::tensor::argmax(g2.value(r).data())
        };
        assert_eq!(bias_shift, crate::tensor::argmax(&lp));

        // per-label loop oracle
        let x1 = b.project_left(&mut g, x).unwrap();
        let x2 = b.project_right(&mut g, y).unwrap();
        let (v1, v2) = (g.value(x1).data().to_vec(), g.value(x2).data().to_vec());
        let w = store.value(b.w).data();
        let u = store.value(b.u).data();
        let v = store.value(b.v).data();
        let bb = store.value(b.b).data();
        let scores: Vec<f64> = (0..39)
            .map(|o| {
                let mut s = bb[o];
                for i in 0..4 {
                    s += u[o * 4 + i] * v1[i] + v[o * 4 + i] * v2[i];
                    for j in 0..4 {
                        s += v1[i] * w[(o * 4 + i) * 4 + j] * v2[j];
                    }
                }
                s
            })
            .collect();
        let want = softmax(&scores);
        for o in 0..39 {
            assert!((lp[o].exp() - want[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn dep_label_classifier_matches_pairwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let b = Biaffine::new(&mut store, "l", 3, 4, 5, 6, 0.0, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let d = g.constant(random_tensor(&[3], &mut rng));
        let rows: Vec<Var> = (0..4).map(|_| g.constant(random_tensor(&[4], &mut rng))).collect();
        let h = g.stack(&rows).unwrap();
        let keys = b.prepare_keys(&mut g, h).unwrap();
        let lp = classify_dep_label(&mut g, &b, d, &keys, 2).unwrap();
        let direct = b.score(&mut g, d, rows[2]).unwrap();
        let want = softmax(g.value(direct).data());
        for (l, w) in g.value(lp).data().iter().zip(want) {
            assert!((l.exp() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn pointer_and_classifier_gradients() {
        for (k, &(din, hin, hidden, labels)) in [(2, 3, 2, 3), (3, 2, 4, 2), (4, 4, 3, 5)].iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(20 + k as u64);
            let mut store = ParamStore::new();
            let p = Biaffine::new(&mut store, "p", din, hin, hidden, 1, 0.0, &mut rng).unwrap();
            let l = Biaffine::new(&mut store, "l", din, hin, hidden, labels, 0.0, &mut rng).unwrap();
            let dt = random_tensor(&[din], &mut rng);
            let ht = random_tensor(&[4, hin], &mut rng);
            let report = check_param_gradients(&store, |g| {
                let d = g.constant(dt.clone());
                let h = g.constant(ht.clone());
                let keys = p.prepare_keys(g, h)?;
                let a = point_biaffine(g, &p, d, &keys, &[true, true, false, true])?;
                let pick = g.pick(a.log_probs, 3)?;
                let lkeys = l.prepare_keys(g, h)?;
                let lp = classify_dep_label(g, &l, d, &lkeys, 1)?;
                let lpick = g.pick(lp, labels - 1)?;
                let s = g.add(pick, lpick)?;
                Ok(g.neg(s))
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{k}: {report:?}");
        }
    }
}
