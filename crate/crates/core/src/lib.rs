pub mod augmentation;
pub mod cli;
pub mod corpus;
pub mod evaluator;
pub mod gateway;
pub mod jsonl;
pub mod prompt;
pub mod table;
pub mod taxonomy;
pub mod text;
pub mod trainer;
