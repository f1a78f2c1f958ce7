#![allow(dead_code)]

pub mod corpus;
pub mod keywords;
pub mod mock_http;
pub mod parsers;
pub mod scan;
