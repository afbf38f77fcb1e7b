use super::model::DepParser;
use super::{DepTree, Sentence};
use crate::error::Result;
use crate::metrics::{score_dep_corpus, DepScore, PunctPolicy};
use crate::tensor::ParamStore;
use crate::train::{better, EpochLog, HasParams, TrainConfig, Trainer};

impl HasParams for DepParser {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepTrainReport {
    pub logs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best: DepScore,
    pub reached_target: bool,
}

/// Greedy-decodes `data` and scores it against the gold trees.
pub fn evaluate_dep(parser: &DepParser, data: &[(Sentence, DepTree)], punct: &PunctPolicy, beam: usize) -> Result<DepScore> {
    let sentences: Vec<Sentence> = data.iter().map(|(s, _)| s.clone()).collect();
    let pred = parser.parse_all(&sentences, beam)?;
    score_dep_corpus(data.iter().zip(&pred).map(|((s, g), p)| (s, g, p)), punct)
}

/// Teacher-forced training with per-epoch dev evaluation. Selection is by dev
/// UAS, ties broken by LAS; the parser ends holding the selected parameters.
/// An empty dev set means the training set is evaluated instead.
pub fn train_dep(
    parser: &mut DepParser,
    train: &[(Sentence, DepTree)],
    dev: &[(Sentence, DepTree)],
    config: &TrainConfig,
    punct: &PunctPolicy,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<DepTrainReport> {
    let indexed: Vec<_> = train.iter().map(|(s, t)| (parser.index(s), t.clone())).collect();
    let dev = if dev.is_empty() { train } else { dev };
    let mut trainer = Trainer::new(config.clone(), &parser.store)?;
    let mut best: Option<(f64, f64)> = None;
    let mut best_score = DepScore::default();
    let mut best_store = None;
    let mut best_epoch = 0;
    let mut logs = Vec::new();
    let mut reached = false;
    for epoch in 1..=config.epochs {
        let loss = trainer.epoch(parser, indexed.len(), |p, g, i| {
            Ok(p.example_loss(g, &indexed[i].0, &indexed[i].1)?.total)
        })?;
        let score = evaluate_dep(parser, dev, punct, 1)?;
        let key = (score.uas(), score.las());
        let improved = better(key, best);
        if improved {
            best = Some(key);
            best_score = score;
            best_store = Some(parser.store.clone());
            best_epoch = epoch;
        }
        trainer.observe(improved);
        let log = EpochLog {
            epoch,
            loss,
            lr: trainer.adam.lr(),
            metrics: vec![("dev_uas".into(), key.0), ("dev_las".into(), key.1)],
        };
        log::info!("{log}");
        on_epoch(&log);
        logs.push(log);
        if config.reached(key.0, key.1) {
            reached = true;
            break;
        }
    }
    if let Some(s) = best_store {
        parser.store = s;
    }
    Ok(DepTrainReport {
        logs,
        best_epoch,
        best: best_score,
        reached_target: reached,
    })
}
