use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for. Together with the base seed and run
/// index it keys an independent ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Chain = 1,
    Observation = 2,
    Bound = 3,
}

/// Keyed stream for `(base_seed, run, purpose)`; `sub` selects one of 2^64
/// ChaCha streams under that key (the agent index for observations).
pub fn stream(base_seed: u64, run: u64, purpose: Purpose, sub: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&run.to_le_bytes());
    key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[24..32].copy_from_slice(b"dhmm-rng");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(sub);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_keyed() {
        let draw = |mut r: ChaCha8Rng| -> u64 { r.random() };
        let a = draw(stream(1, 0, Purpose::Chain, 0));
        assert_eq!(a, draw(stream(1, 0, Purpose::Chain, 0)));
        assert_ne!(a, draw(stream(2, 0, Purpose::Chain, 0)));
        assert_ne!(a, draw(stream(1, 1, Purpose::Chain, 0)));
        assert_ne!(a, draw(stream(1, 0, Purpose::Observation, 0)));
        assert_ne!(a, draw(stream(1, 0, Purpose::Chain, 1)));
    }
}
