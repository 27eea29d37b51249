use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes that draw from the same master seed.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Domain {
    DelayTolerance = 1,
    Requests = 2,
    Trial = 3,
    FileSizes = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One ChaCha stream per `(seed, domain, index)`; independent of how work is
/// split across threads.
pub(crate) fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(domain as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
