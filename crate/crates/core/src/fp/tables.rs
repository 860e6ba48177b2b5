//! Memoized ⊕/⊗ tables for narrow formats, filled from the scalar kernel.
//! Matrix products index these instead of re-deriving each rounding; the results
//! are the kernel's own outputs, so semantics are unchanged.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use super::{fp_add, fp_from_bits, fp_mul, fp_to_bits, Fp, FpFormat};

/// Widest encoding that gets tables (512 codes, two 256K-entry tables).
pub const MAX_TABLE_WIDTH: u32 = 9;

pub struct OpTables {
    fmt: FpFormat,
    codes: usize,
    add: Vec<u16>,
    mul: Vec<u16>,
    decode: Vec<Fp>,
}

impl OpTables {
    fn build(fmt: FpFormat) -> OpTables {
        let codes = 1usize << fmt.width();
        let decode: Vec<Fp> = (0..codes as u64).map(|b| fp_from_bits(b, fmt).unwrap()).collect();
        let mut add = vec![0u16; codes * codes];
        let mut mul = vec![0u16; codes * codes];
        for (i, &x) in decode.iter().enumerate() {
            for (j, &y) in decode.iter().enumerate() {
                add[i * codes + j] = fp_to_bits(fp_add(x, y, fmt), fmt) as u16;
                mul[i * codes + j] = fp_to_bits(fp_mul(x, y, fmt), fmt) as u16;
            }
        }
        OpTables { fmt, codes, add, mul, decode }
    }

    pub fn format(&self) -> FpFormat {
        self.fmt
    }

    #[inline]
    pub fn encode(&self, x: Fp) -> u16 {
        fp_to_bits(x, self.fmt) as u16
    }

    #[inline]
    pub fn decode(&self, c: u16) -> Fp {
        self.decode[c as usize]
    }

    #[inline]
    pub fn add(&self, a: u16, b: u16) -> u16 {
        self.add[a as usize * self.codes + b as usize]
    }

    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        self.mul[a as usize * self.codes + b as usize]
    }
}

/// Shared tables for `fmt`, built on first use; `None` for wide formats.
pub fn op_tables(fmt: FpFormat) -> Option<&'static OpTables> {
    if fmt.width() > MAX_TABLE_WIDTH {
        return None;
    }
    static CACHE: OnceLock<Mutex<HashMap<FpFormat, &'static OpTables>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    Some(*guard.entry(fmt).or_insert_with(|| Box::leak(Box::new(OpTables::build(fmt)))))
}
