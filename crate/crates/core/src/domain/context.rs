use std::fmt;

use crate::engine::{EventKind, ScheduleEvent};
use crate::error::{Error, Result};

use super::key::{generate_key, Key, SimRng};

/// Small thread identifier. Used both for hardware thread slots and for the
/// software threads that are scheduled onto them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tid(pub u8);

impl Tid {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Tid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Privilege {
    #[default]
    User,
    Kernel,
}

/// One hardware thread: its private key register and what currently runs on
/// it.
///
/// `tid` names the hardware thread and never changes. `resident` is the
/// software thread scheduled on it; predictor entries written under precise
/// flush are tagged with the resident thread.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadContext {
    tid: Tid,
    resident: Tid,
    privilege: Privilege,
    key: Key,
    rotation_count: u64,
}

impl ThreadContext {
    pub fn new(tid: Tid, key: Key) -> Self {
        ThreadContext {
            tid,
            resident: tid,
            privilege: Privilege::User,
            key,
            rotation_count: 0,
        }
    }

    pub fn with_resident(mut self, resident: Tid) -> Self {
        self.resident = resident;
        self
    }

    pub fn tid(&self) -> Tid {
        self.tid
    }

    pub fn resident(&self) -> Tid {
        self.resident
    }

    pub fn privilege(&self) -> Privilege {
        self.privilege
    }

    pub fn key(&self) -> Key {
        self.key
    }

    pub fn rotation_count(&self) -> u64 {
        self.rotation_count
    }

    /// Applies a switch event to this context, drawing a new key.
    ///
    /// Only `ContextSwitchIn` and `PrivilegeChange` events addressed to this
    /// hardware thread are accepted.
    pub fn rotate_key(&mut self, event: &ScheduleEvent, rng: &mut SimRng) -> Result<()> {
        self.apply_switch(event)?;
        self.key = generate_key(rng);
        self.rotation_count += 1;
        Ok(())
    }

    /// Records the scheduling side of a switch event (who runs, at which
    /// privilege) without touching the key. Used by mechanisms that do not
    /// rotate keys.
    pub fn apply_switch(&mut self, event: &ScheduleEvent) -> Result<()> {
        if event.kind.target() != self.tid {
            return Err(Error::contract(format!(
                "event for {} delivered to context {}",
                event.kind.target(),
                self.tid
            )));
        }
        match event.kind {
            EventKind::ContextSwitchIn { thread, .. } => self.resident = thread,
            EventKind::PrivilegeChange { to, .. } => self.privilege = to,
            EventKind::ContextSwitchOut { .. } => {
                return Err(Error::contract("switch-out events do not rotate keys"))
            }
        }
        Ok(())
    }
}

/// Functional form of [`ThreadContext::rotate_key`].
pub fn rotate_key(
    ctx: &ThreadContext,
    event: &ScheduleEvent,
    rng: &mut SimRng,
) -> Result<ThreadContext> {
    let mut next = ctx.clone();
    next.rotate_key(event, rng)?;
    Ok(next)
}
