use std::sync::Arc;

use crate::kernel_exec::ExecPlace;
use crate::memory_pool::MemoryManager;

/// Execution place plus the memory manager shared by all operators of a run.
#[derive(Debug, Clone, Default)]
pub struct Runtime {
    pub exec: ExecPlace,
    pub memory: Arc<MemoryManager>,
}

impl Runtime {
    pub fn new(exec: ExecPlace) -> Self {
        Self {
            exec,
            memory: Arc::new(MemoryManager::new()),
        }
    }

    pub fn sequential() -> Self {
        Self::new(ExecPlace::Sequential)
    }
}
