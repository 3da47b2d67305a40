pub mod canonical;
pub mod config;
pub mod delivery;
pub mod dom_model;
pub mod engine;
pub mod evalkit;
pub mod grounding;
pub mod handbook;
pub mod knowledge;
pub mod prompts;
pub mod providers;
pub mod recommender;
#[doc(hidden)]
pub mod testkit;
