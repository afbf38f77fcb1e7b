use super::model::{RstInput, RstParser};
use super::DiscTree;
use crate::error::Result;
use crate::metrics::{score_parseval, ParsevalScore};
use crate::tensor::ParamStore;
use crate::train::{better, EpochLog, HasParams, TrainConfig, Trainer};

impl HasParams for RstParser {
    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// A selected checkpoint: epoch, dev score and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub epoch: usize,
    pub score: ParsevalScore,
    pub params: ParamStore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RstTrainReport {
    pub logs: Vec<EpochLog>,
    /// Best by Span F1, ties broken by Relation F1.
    pub best_span: Option<Selected>,
    /// Best by Relation F1, ties broken by Span F1.
    pub best_relation: Option<Selected>,
    pub reached_target: bool,
}

/// Greedy-decodes the EDU sequences of `data` and pools Parseval counts.
pub fn evaluate_rst(parser: &RstParser, data: &[DiscTree], include_root: bool) -> Result<ParsevalScore> {
    let inputs: Vec<Vec<String>> = data.iter().map(|t| t.edus.clone()).collect();
    let pred = parser.parse_all(&inputs)?;
    let mut total = ParsevalScore::default();
    for (g, p) in data.iter().zip(&pred) {
        total.merge(&score_parseval(g, p, include_root)?);
    }
    Ok(total)
}

/// Teacher-forced training that tracks both the best-Span and the
/// best-Relation checkpoint. The parser ends holding the best-Span
/// parameters. An empty dev set means the training set is evaluated.
pub fn train_rst(
    parser: &mut RstParser,
    train: &[DiscTree],
    dev: &[DiscTree],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<RstTrainReport> {
    let indexed: Vec<(RstInput, &DiscTree)> = train
        .iter()
        .map(|t| Ok((parser.index(&t.edus)?, t)))
        .collect::<Result<_>>()?;
    let dev = if dev.is_empty() { train } else { dev };
    let mut trainer = Trainer::new(config.clone(), &parser.store)?;
    let mut best_span: Option<Selected> = None;
    let mut best_relation: Option<Selected> = None;
    let mut logs = Vec::new();
    let mut reached = false;
    for epoch in 1..=config.epochs {
        let loss = trainer.epoch(parser, indexed.len(), |p, g, i| {
            Ok(p.example_loss(g, &indexed[i].0, indexed[i].1)?.total)
        })?;
        let score = evaluate_rst(parser, dev, true)?;
        let (span, relation) = (score.span.f1(), score.relation.f1());
        let key = |s: &Option<Selected>, swap: bool| {
            s.as_ref().map(|s| {
                let k = (s.score.span.f1(), s.score.relation.f1());
                if swap {
                    (k.1, k.0)
                } else {
                    k
                }
            })
        };
        let span_improved = better((span, relation), key(&best_span, false));
        if span_improved {
            best_span = Some(Selected {
                epoch,
                score,
                params: parser.store.clone(),
            });
        }
        if better((relation, span), key(&best_relation, true)) {
            best_relation = Some(Selected {
                epoch,
                score,
                params: parser.store.clone(),
            });
        }
        trainer.observe(span_improved);
        let log = EpochLog {
            epoch,
            loss,
            lr: trainer.adam.lr(),
            metrics: vec![
                ("dev_span".into(), span),
                ("dev_nuclearity".into(), score.nuclearity.f1()),
                ("dev_relation".into(), relation),
            ],
        };
        log::info!("{log}");
        on_epoch(&log);
        logs.push(log);
        if config.reached(span, relation) {
            reached = true;
            break;
        }
    }
    if let Some(s) = &best_span {
        parser.store = s.params.clone();
    }
    Ok(RstTrainReport {
        logs,
        best_span,
        best_relation,
        reached_target: reached,
    })
}
