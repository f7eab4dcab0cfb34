//! Instance completion: stage-one pairs, stage-two tails, and evaluation.

mod candidates;
mod complete;
mod report;
mod stage_one;

pub use candidates::{coverage, generate_candidates, gold_pairs, pair_precision, CandidatePair};
pub use complete::{
    complete, CompletionOutcome, GenerativeLinkPredictor, InstancePrediction, KgeLinkPredictor, LinkPredictor,
    PairFailure,
};
pub use report::{
    ablate, ablation_table, ablation_tsv, eval_ic, write_predictions_tsv, AblationRow, Counts, EvalReport, Fingerprints,
    HitsAt, DEFAULT_KS,
};
pub use stage_one::{
    build_predictor, eval_properties, fit_threshold, gold_vectors, score_heads, StageOneMethod, StageOneOptions,
};

pub(crate) fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
