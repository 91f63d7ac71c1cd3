//! Inputs shared by the benchmarks.

use std::path::PathBuf;

/// A chain of `n` triples with a constant every third position.
pub fn chain_query(n: usize) -> String {
    let mut body = String::new();
    for i in 0..n {
        let object = if i % 3 == 2 {
            format!("wd:Q{}", 100 + i)
        } else {
            format!("?v{}", i + 1)
        };
        body.push_str(&format!("  ?v{i} wdt:P{} {object} .\n", 1 + i % 40));
    }
    format!("SELECT * WHERE {{\n{body}}}")
}

pub fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_parses() {
        let q = kgqa_core::sparql::parse_select(&chain_query(9)).unwrap();
        assert_eq!(q.triples.len(), 9);
    }
}
