use crate::error::ClusterError;

/// Global index `g` lives on shard `g / C_cap` at local index `g mod C_cap`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShardLayout {
    pub shards: usize,
    pub shard_capacity: usize,
}

impl ShardLayout {
    pub fn new(shards: usize, shard_capacity: usize) -> Self {
        Self {
            shards,
            shard_capacity,
        }
    }

    pub fn total_capacity(&self) -> usize {
        self.shards * self.shard_capacity
    }

    pub fn route(&self, g: u64) -> Result<(usize, usize), ClusterError> {
        let total = self.total_capacity() as u64;
        if g >= total {
            return Err(ClusterError::CapacityExceeded {
                index: g,
                capacity: total,
            });
        }
        let c = self.shard_capacity as u64;
        Ok(((g / c) as usize, (g % c) as usize))
    }

    pub fn global(&self, shard: usize, local: usize) -> u64 {
        (shard * self.shard_capacity + local) as u64
    }
}
