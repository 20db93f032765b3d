//! Building blocks of a science question-answering service: passage
//! segmentation, corpus and exam-bank storage, text embedding, exact cosine
//! retrieval, syllabus topic classification, the ask flow and usage
//! analytics.

pub mod analytics;
pub mod corpus;
pub mod embedder;
pub mod fixtures;
pub mod qa;
pub mod segmenter;
pub mod topics;
pub mod vindex;
