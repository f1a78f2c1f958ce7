mod oracles;

use oracles::keywords::{brute_force, check_expansion, random_vocabulary};
use proptest::prelude::*;

#[test]
fn thousand_word_vocabulary_matches_brute_force() {
    let rows = random_vocabulary(1000, 32, 7);
    assert_eq!(check_expansion(&rows, &[0, 1, 5, 10], 25), 4 * 25);
}

#[test]
fn equal_vectors_tie_break_by_word() {
    let rows: Vec<(String, Vec<f64>)> = vec![
        ("seed".into(), vec![1.0, 1.0]),
        ("zeta".into(), vec![2.0, 2.0]),
        ("alpha".into(), vec![2.0, 2.0]),
        ("mid".into(), vec![1.0, 0.0]),
    ];
    let got: Vec<String> = brute_force(&rows, "seed", 2).into_iter().map(|(w, _)| w).collect();
    assert_eq!(got, ["alpha", "zeta"]);
    check_expansion(&rows, &[0, 1, 2, 3, 10], 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expansion_equals_brute_force(n in 1usize..120, dim in 1usize..6, seed in any::<u64>(), k in 0usize..12) {
        let rows = random_vocabulary(n, dim, seed);
        check_expansion(&rows, &[k], 10);
    }
}
