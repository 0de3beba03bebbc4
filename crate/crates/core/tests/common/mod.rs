//! Seeded random instances shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vflow::flow::{CapVec, FlowNetwork, NetworkBuilder};
use vflow::mot::{build_graph, BBox, Detection, GraphParams, MotGraph};

/// A small tracking instance: at most `max_dets` detections, k ≤ 4, d ≤ 3.
/// Detections come from `d` objects moving at most 10 px per frame and
/// seen at frame gaps within a random window, so a feasible cover always
/// exists; a random gate of at least that speed prunes other transitions.
/// Half the instances use features on a coarse grid, which produces many
/// exactly tied covers.
pub fn random_mot(seed: u64, max_dets: usize) -> MotGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=4);
    let d = rng.random_range(1..=3usize);
    let n = rng.random_range(d..=max_dets.max(d));
    let dt = rng.random_range(1..=3u32);
    let coarse = rng.random_bool(0.5);

    // Split n detections among the objects, at least one each.
    let mut counts = vec![1usize; d];
    for _ in d..n {
        counts[rng.random_range(0..d)] += 1;
    }
    let mut dets = Vec::with_capacity(n);
    for count in counts {
        let mut frame = rng.random_range(1..=3u32);
        let start = [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)];
        let v = [rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)];
        for _ in 0..count {
            let t = f64::from(frame);
            let feature = (0..k)
                .map(|_| {
                    if coarse {
                        f64::from(rng.random_range(0..=4u8)) * 0.25
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect();
            dets.push(Detection {
                frame,
                id: dets.len() as u64 + 1,
                bbox: BBox::new(start[0] + v[0] * t, start[1] + v[1] * t, 10.0, 10.0),
                gt_id: None,
                feature,
            });
            frame += rng.random_range(1..=dt);
        }
    }
    let gate = rng.random_bool(0.5).then(|| rng.random_range(10.0..40.0));
    let params = GraphParams {
        dt,
        gate,
        batch: None,
        d,
    };
    build_graph(&dets, &params).expect("generated detections are valid")
}

/// A random layered DAG with finite capacities on every edge out of an
/// intermediate node, so no source-sink path is unbounded.
pub fn random_dag(seed: u64) -> FlowNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=4);
    let n = rng.random_range(1..=7usize);
    let d = rng.random_range(1..=n.min(3));
    let cap = |rng: &mut ChaCha8Rng| CapVec::finite((0..k).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>());
    let mut b = NetworkBuilder::new();
    b.node("s");
    for i in 0..n {
        b.node(&format!("n{i}"));
    }
    b.node("t");
    for i in 0..n {
        let name = format!("n{i}");
        if rng.random_bool(0.7) {
            b.edge("s", &name, CapVec::Infinite);
        }
        for j in i + 1..n {
            if rng.random_bool(0.4) {
                let c = cap(&mut rng);
                b.edge(&name, &format!("n{j}"), c);
            }
        }
        let c = cap(&mut rng);
        b.edge(&name, "t", c);
    }
    b.build("s", "t", k, d).expect("generated network is valid")
}
