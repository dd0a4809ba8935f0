//! 64-bit FNV-1a digests used to fingerprint datasets, configs and parameters.

use std::hash::Hasher;

use fnv::FnvHasher;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Digest of a float slice over its little-endian bit patterns.
pub fn digest_f64s(values: &[f64]) -> u64 {
    let mut h = FnvHasher::default();
    for v in values {
        h.write(&v.to_bits().to_le_bytes());
    }
    h.finish()
}

pub fn hex(d: u64) -> String {
    format!("{d:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv1a_reference_vectors() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn float_digest_sees_sign_of_zero() {
        assert_ne!(digest_f64s(&[0.0]), digest_f64s(&[-0.0]));
    }
}
