pub mod audit;
pub mod oracle;
