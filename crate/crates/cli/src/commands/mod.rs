pub mod agreement;
pub mod arena;
pub mod report;
pub mod score;
pub mod validate;
