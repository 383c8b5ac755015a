//! Training-free refinement: pick the more reliable modality, turn the coarse
//! map into mask and box prompts, query a frozen promptable segmenter and fuse
//! its answer back into the coarse map.

mod pipeline;
mod prompt;
mod quality;
mod refine;
mod segmenter;

pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutcome, RefineInput, SelectorMode};
pub use prompt::{
    binarize, build_prompts, connected_components, extract_boxes, min_area_for, BoxPrompt,
    Component, HybridPrompt,
};
pub use quality::{
    decide_modality, quality_from_cosines, quality_score, select_modality, AntonymPair,
    ImageTextScorer, Modality, QualityScores, SelectorConfig, TauSemantics,
};
pub use refine::{refine, RefineStrategy};
pub use segmenter::{segment, PromptKinds, SegmentOutput, SegmentQuery, Segmenter, StubSegmenter};
