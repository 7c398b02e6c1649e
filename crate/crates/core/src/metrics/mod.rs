//! Evaluation metrics: text overlap, likelihood-based scores, forget
//! quality, model utility and membership inference.

pub mod lm;
pub mod report;
pub mod stats;
pub mod text;

pub use lm::{
    answer_ratio, forget_quality, generate_answers, greedy_generate, knowmem, min_k_from_log_probs,
    min_k_score, min_k_scores, normalized_cond_prob, perplexity, score_generations, strip_specials,
    truth_ratio, truth_ratios, verbmem, GenerationScores, Pair, TruthDenominator, DEFAULT_MIN_K,
};
pub use report::{markdown_table, read_csv, report_rows, write_csv, MetricsReport, ReportRow};
pub use stats::{
    auc_roc, fq_gap, harmonic_mean, ks_statistic, ks_two_sample, model_utility, privleak, KsResult,
};
pub use text::{bleu, lcs_len, rouge_l_f1, rouge_l_recall};
