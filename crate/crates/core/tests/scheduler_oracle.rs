mod support;

use nerfsim_core::scheduler::{check_partition, greedy_partition, PatchShape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::partition_oracle::{total, Oracle};
use support::tiny_rigs::tiny_case;

#[test]
fn greedy_matches_replay_and_lies_within_oracle_bounds() {
    let mut r = ChaCha8Rng::seed_from_u64(71);
    let mut optimal = 0;
    for i in 0..100 {
        let case = tiny_case(&mut r);
        let greedy = greedy_partition(&case.cube, &case.candidates, case.capacity).unwrap();
        check_partition(&case.cube, &greedy, case.capacity).unwrap();
        let mut oracle = Oracle::new(&case.cube, &case.candidates, case.capacity);
        let replay = oracle.greedy_replay().expect("replay feasible");
        let got: Vec<_> = greedy.iter().map(|p| (p.anchor.0, p.anchor.1, p.anchor.2, p.shape, p.bytes())).collect();
        assert_eq!(got, replay, "rig {i}: greedy queue differs from the replay");
        let b = oracle.bounds().expect("feasible");
        let g = total(&greedy);
        assert!(b.best <= g && g <= b.worst, "rig {i}: greedy {g} outside [{}, {}]", b.best, b.worst);
        if g == b.best {
            optimal += 1;
        }
    }
    assert!(optimal > 0);
}

#[test]
fn documented_tiny_example() {
    use nerfsim_core::rig::{ring_poses, standard_novel, standard_ring};
    use nerfsim_core::scheduler::{FeatureLayout, WorkloadCube};
    let sources = ring_poses(&standard_ring(2, 16)).unwrap();
    let layout = FeatureLayout { height: 16, width: 16, channels: 4, bytes_per_feature: 1 };
    let cube = WorkloadCube::new(standard_novel(4), 2, (2.5, 6.5), sources, layout).unwrap();
    let cands = [PatchShape::new(4, 2, 1), PatchShape::new(2, 4, 1), PatchShape::new(2, 2, 2)];
    let cap = 1 << 20;
    let greedy = greedy_partition(&cube, &cands, cap).unwrap();
    let b = Oracle::new(&cube, &cands, cap).bounds().unwrap();
    let g = total(&greedy);
    assert!(b.best <= g && g <= b.worst);
    assert_eq!(greedy.iter().map(|p| p.shape.volume()).sum::<usize>(), 32);
}
