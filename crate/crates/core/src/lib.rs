pub mod axml;
pub mod container;
pub mod dex;
pub mod diag;
pub mod flow;
pub mod program;
pub mod pii;
pub mod pattern;
pub mod taint;
pub mod trackers;
pub mod malware;
pub mod rules;
pub mod report;
