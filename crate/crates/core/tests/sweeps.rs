use std::time::Instant;

use htmodel::evaluation::{sweep_topics, SweepOptions};
use htmodel::synthetic::PlantedTopics;
use htmodel::topics::{ModelFamily, TopicModelSpec};

#[test]
fn topic_sweep_finds_planted_count() {
    let start = Instant::now();
    let mut hits = 0;
    for seed in 0..5u64 {
        let (tc, _) = PlantedTopics::default().generate(seed).unwrap();
        let spec = TopicModelSpec::new(ModelFamily::Lda, 4, 10).with_iterations(200).with_seed(seed);
        let sweep = sweep_topics(&tc, &spec, &[2, 4, 8], &SweepOptions::default()).unwrap();
        if sweep.argmax == [4] {
            hits += 1;
        }
    }
    assert!(hits >= 3, "argmax at T=4 on {hits} of 5 seeds");
    assert!(start.elapsed().as_secs_f64() < 60.0);
}
