use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha8 stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed for component `tag`.
pub fn derive(seed: u64, tag: u64) -> u64 {
    use rand::RngCore;
    stream(seed, tag.wrapping_add(1 << 32)).next_u64()
}
