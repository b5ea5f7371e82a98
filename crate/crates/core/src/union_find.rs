//! Disjoint-set forest with union by size and path halving.

#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    #[inline]
    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns the surviving root and
    /// whether two distinct sets were joined.
    #[inline]
    pub fn union(&mut self, a: u32, b: u32) -> (u32, bool) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return (ra, false);
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        (ra, true)
    }

    /// Size of the set whose root is `root`.
    #[inline]
    pub fn root_size(&self, root: u32) -> u32 {
        self.size[root as usize]
    }

    pub fn set_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_and_sizes() {
        let mut uf = UnionFind::new(5);
        assert_eq!(uf.union(0, 1), (uf.find(0), true));
        assert!(!uf.union(1, 0).1);
        uf.union(3, 4);
        uf.union(4, 1);
        assert_eq!(uf.set_size(0), 4);
        assert_eq!(uf.set_size(2), 1);
        assert_eq!(uf.find(3), uf.find(0));
    }
}
