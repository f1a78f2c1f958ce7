pub mod apk;
pub mod axml;
pub mod dex;
pub mod fixtures;
