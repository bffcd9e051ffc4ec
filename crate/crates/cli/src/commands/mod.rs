pub mod evaluate;
pub mod export;
pub mod gradcheck;
pub mod oracle;
pub mod recommend;
pub mod synth;
pub mod train;
