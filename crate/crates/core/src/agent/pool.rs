//! Least-recently-used cache of loaded models with a grace period for new entries.

#[derive(Debug)]
struct Slot<V> {
    key: String,
    value: V,
    last_used: u64,
    added: u64,
}

#[derive(Debug)]
pub struct LruPool<V> {
    capacity: usize,
    /// Accesses during which a newly added entry cannot be evicted.
    grace: u64,
    clock: u64,
    slots: Vec<Slot<V>>,
}

impl<V> LruPool<V> {
    pub fn new(capacity: usize, grace: u64) -> Self {
        assert!(capacity >= 1, "pool capacity must be at least 1");
        LruPool { capacity, grace, clock: 0, slots: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.slots.iter().any(|s| s.key == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.key.as_str())
    }

    fn in_grace(&self, s: &Slot<V>) -> bool {
        self.clock - s.added <= self.grace && s.added != 0 && self.grace > 0
    }

    fn evict_one(&mut self) {
        let pick = |pool: &Self, allow_grace: bool| {
            pool.slots
                .iter()
                .enumerate()
                .filter(|(_, s)| allow_grace || !pool.in_grace(s))
                .min_by_key(|(_, s)| s.last_used)
                .map(|(i, _)| i)
        };
        if let Some(i) = pick(self, false).or_else(|| pick(self, true)) {
            let s = self.slots.remove(i);
            log::debug!("model pool evicted {}", s.key);
        }
    }

    /// Hit refreshes recency; miss loads through `load`, evicting if full.
    pub fn access<E>(&mut self, key: &str, load: impl FnOnce() -> Result<V, E>) -> Result<&mut V, E> {
        self.clock += 1;
        if let Some(i) = self.slots.iter().position(|s| s.key == key) {
            self.slots[i].last_used = self.clock;
            return Ok(&mut self.slots[i].value);
        }
        let value = load()?;
        while self.slots.len() >= self.capacity {
            self.evict_one();
        }
        self.slots.push(Slot { key: key.to_string(), value, last_used: self.clock, added: self.clock });
        Ok(&mut self.slots.last_mut().expect("just pushed").value)
    }

    /// Replace a cached value without counting an access.
    pub fn update(&mut self, key: &str, value: V) {
        if let Some(s) = self.slots.iter_mut().find(|s| s.key == key) {
            s.value = value;
        }
    }
}
