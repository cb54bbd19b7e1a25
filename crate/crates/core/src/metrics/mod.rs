//! Recognition, landmark and detection measures.

pub mod classification;
pub mod detection;
pub mod landmark;
pub mod report;

pub use classification::{accuracy, macro_prf, macro_prf_with, topk_error, ConfusionMatrix, MacroF, Prf};
pub use detection::{
    detection_rates, iou, match_image, DetectionOutcome, DetectionRates, Verdict, DEFAULT_IOU_THRESHOLD,
};
pub use landmark::{landmark_rmse, landmark_rmse_tables};
pub use report::{
    evaluate_recognition, format_predictions, kv, parse_kv, parse_predictions, PredictionRecord, RecognitionReport,
};
