//! Fixed-width token encoding of IR segments for the agent.

use super::{IrSegment, Op, Operand, TacInstr};

pub const TOKENS_PER_INSTR: usize = 5;
pub const PAD: u32 = 0;
pub const UNK: u32 = 1;

const CODE_BASE: u32 = 2;
const LHS_BASE: u32 = 16;
const RHS_BASE: u32 = 24;
const OP_BASE: u32 = 32;
const SIG_BASE: u32 = 48;
const RESERVED_TAIL: u32 = 16;

/// Token layout over a vocabulary of `size` ids: code type with bound flag,
/// lhs class, rhs class, operator (call signatures hashed), result class with
/// operator flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocabulary {
    pub size: u32,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary { size: 256 }
    }
}

impl Vocabulary {
    pub fn new(size: u32) -> Self {
        assert!(size >= SIG_BASE + RESERVED_TAIL + 1, "vocabulary too small");
        Vocabulary { size }
    }

    fn tail(&self) -> u32 {
        self.size - RESERVED_TAIL
    }

    fn sig_token(&self, text: &str) -> u32 {
        // FNV-1a keeps the mapping stable across runs and platforms.
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        SIG_BASE + (h % (self.tail() - SIG_BASE) as u64) as u32
    }

    pub fn encode_instr(&self, ins: &TacInstr) -> [u32; TOKENS_PER_INSTR] {
        let bound = ins.is_bound() as u32;
        let code = if (1..=6).contains(&ins.code) { CODE_BASE + (ins.code as u32 - 1) * 2 + bound } else { UNK };
        let op = match (&ins.op, &ins.lhs) {
            (Op::Call, Operand::Sig(s)) => self.sig_token(&s.text),
            (op, _) => OP_BASE + op.id(),
        };
        let flags = self.tail() + ins.result.class_id() + 8 * (ins.op != Op::None) as u32;
        [code, LHS_BASE + ins.lhs.class_id(), RHS_BASE + ins.rhs.class_id(), op, flags]
    }
}

pub fn encode_state(s: &IrSegment, vocab: &Vocabulary) -> Vec<u32> {
    s.instrs.iter().flat_map(|i| vocab.encode_instr(i)).collect()
}
