use std::time::Instant;

use htmodel::preprocess::stem_porter;

const VOC: &str = include_str!("data/porter_voc.txt");
const OUTPUT: &str = include_str!("data/porter_output.txt");

#[test]
fn reference_vocabulary_matches_exactly() {
    let words: Vec<&str> = VOC.lines().collect();
    let expected: Vec<&str> = OUTPUT.lines().collect();
    assert_eq!(words.len(), expected.len());
    assert!(words.len() >= 20_000);

    let start = Instant::now();
    let stems: Vec<String> = words.iter().map(|w| stem_porter(w)).collect();
    let elapsed = start.elapsed();

    let mismatches: Vec<_> = words
        .iter()
        .zip(&expected)
        .zip(&stems)
        .filter(|((_, want), got)| got.as_str() != **want)
        .map(|((w, want), got)| format!("{w}: want {want}, got {got}"))
        .collect();
    assert!(mismatches.is_empty(), "{} mismatches, first: {:?}", mismatches.len(), &mismatches[..mismatches.len().min(10)]);
    assert!(elapsed.as_secs_f64() < 1.0, "stemming took {elapsed:?}");
}
