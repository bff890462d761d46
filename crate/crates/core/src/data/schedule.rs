use crate::rng::{mix, SplitMix64};

/// The batches of one epoch: sort the ids, shuffle them with a generator
/// seeded by `mix(shared_seed, epoch)`, and cut into `batch_size` chunks with
/// the remainder last. Both parties derive the same schedule independently.
pub fn batch_schedule<S: Ord + Clone>(
    ids: &[S],
    epoch: u32,
    shared_seed: u64,
    batch_size: usize,
) -> Vec<Vec<S>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order = ids.to_vec();
    order.sort();
    SplitMix64::new(mix(shared_seed, u64::from(epoch))).shuffle(&mut order);
    order.chunks(batch_size).map(<[S]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_coverage() {
        let ids: Vec<u32> = (0..10).rev().collect();
        let s = batch_schedule(&ids, 0, 42, 4);
        assert_eq!(s.iter().map(Vec::len).collect::<Vec<_>>(), [4, 4, 2]);
        let mut all: Vec<u32> = s.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn input_order_does_not_matter() {
        let a: Vec<u32> = (0..30).collect();
        let b: Vec<u32> = (0..30).rev().collect();
        assert_eq!(batch_schedule(&a, 3, 9, 7), batch_schedule(&b, 3, 9, 7));
    }
}
