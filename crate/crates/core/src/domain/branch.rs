/// Control-flow class of a dynamic branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BranchKind {
    Conditional,
    Indirect,
    DirectCall,
    Return,
}

impl BranchKind {
    /// Token used in trace files.
    pub fn token(self) -> &'static str {
        match self {
            BranchKind::Conditional => "cond",
            BranchKind::Indirect => "ind",
            BranchKind::DirectCall => "call",
            BranchKind::Return => "ret",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Some(match token {
            "cond" => BranchKind::Conditional,
            "ind" => BranchKind::Indirect,
            "call" => BranchKind::DirectCall,
            "ret" => BranchKind::Return,
            _ => return None,
        })
    }

    pub fn is_conditional(self) -> bool {
        self == BranchKind::Conditional
    }
}

/// One dynamic branch.
///
/// `inst_gap` counts the non-branch instructions executed since the previous
/// branch of the same thread, so a record accounts for `inst_gap + 1`
/// instructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BranchRecord {
    pub pc: u64,
    pub kind: BranchKind,
    pub taken: bool,
    pub target: u64,
    pub inst_gap: u32,
    pub tid: super::Tid,
}

impl BranchRecord {
    pub fn conditional(pc: u64, taken: bool, target: u64) -> Self {
        BranchRecord {
            pc,
            kind: BranchKind::Conditional,
            taken,
            target,
            inst_gap: 0,
            tid: super::Tid(0),
        }
    }

    /// Unconditional control transfer; always taken.
    pub fn jump(pc: u64, kind: BranchKind, target: u64) -> Self {
        BranchRecord {
            pc,
            kind,
            taken: true,
            target,
            inst_gap: 0,
            tid: super::Tid(0),
        }
    }

    pub fn with_gap(mut self, inst_gap: u32) -> Self {
        self.inst_gap = inst_gap;
        self
    }

    pub fn with_tid(mut self, tid: super::Tid) -> Self {
        self.tid = tid;
        self
    }

    /// Non-conditional kinds are always taken regardless of the stored flag.
    pub fn is_taken(&self) -> bool {
        self.taken || !self.kind.is_conditional()
    }

    pub fn instructions(&self) -> u64 {
        self.inst_gap as u64 + 1
    }

    pub fn fall_through(&self) -> u64 {
        self.pc.wrapping_add(4)
    }

    /// Address of the next instruction actually executed.
    pub fn next_pc(&self) -> u64 {
        if self.is_taken() {
            self.target
        } else {
            self.fall_through()
        }
    }
}
