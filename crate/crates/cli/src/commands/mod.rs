pub mod experiment;
pub mod mechanize;
pub mod mle;
pub mod test;
