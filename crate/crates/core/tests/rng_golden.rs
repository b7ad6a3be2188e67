use prepaid_core::engine::{SimRng, ZERO_SEED_REPLACEMENT};

fn reference(mut x: u64, n: usize) -> Vec<u64> {
    (0..n)
        .map(|_| {
            x ^= x >> 12;
            x ^= x << 25;
            x ^= x >> 27;
            x.wrapping_mul(0x2545_F491_4F6C_DD1D)
        })
        .collect()
}

#[test]
fn seed_one_matches_recorded_stream() {
    let golden: Vec<u64> = include_str!("golden/xorshift64star_seed1.txt")
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(golden.len(), 16);
    let mut rng = SimRng::new(1);
    let ours: Vec<u64> = (0..16).map(|_| rng.next_u64()).collect();
    assert_eq!(ours, golden);
}

#[test]
fn matches_reference_recurrence_for_many_seeds() {
    for seed in [2_u64, 3, 42, 0xDEAD_BEEF, u64::MAX] {
        let mut rng = SimRng::new(seed);
        let ours: Vec<u64> = (0..64).map(|_| rng.next_u64()).collect();
        assert_eq!(ours, reference(seed, 64), "seed {seed}");
    }
}

#[test]
fn zero_seed_is_remapped() {
    let mut a = SimRng::new(0);
    let mut b = SimRng::new(ZERO_SEED_REPLACEMENT);
    assert_eq!(a.next_u64(), 973_819_730_272_012_410);
    assert_eq!(a.next_u64(), {
        b.next_u64();
        b.next_u64()
    });
}
