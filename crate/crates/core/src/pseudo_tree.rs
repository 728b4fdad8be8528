//! Pseudo-tree arrangement of the constraint graph.
//!
//! A depth-first traversal turns every constraint into either a tree edge or
//! a pseudo edge (a back edge to an ancestor), so agents in different branches
//! share no constraint and can be searched in parallel.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{AdcopInstance, AgentId};
use crate::utility::DimOrder;

#[derive(Clone, Debug)]
pub struct PseudoTree {
    root: AgentId,
    parent: Vec<Option<AgentId>>,
    pseudo_parents: Vec<Vec<AgentId>>,
    children: Vec<Vec<AgentId>>,
    pseudo_children: Vec<Vec<AgentId>>,
    /// Ancestors constrained with the agent or any of its descendants,
    /// ordered shallowest first.
    sep: Vec<Vec<AgentId>>,
    depth: Vec<usize>,
    /// Depth-first visit order (parents before children).
    preorder: Vec<AgentId>,
}

impl PseudoTree {
    /// Builds the tree by DFS from the maximum-degree agent, visiting
    /// neighbors in descending degree (ties to the smaller id).
    pub fn build(instance: &AdcopInstance) -> Result<PseudoTree> {
        let root = (0..instance.agent_count())
            .max_by_key(|&a| (instance.degree(a), std::cmp::Reverse(a)))
            .expect("instance has agents");
        PseudoTree::build_from(instance, root)
    }

    /// Builds the tree by DFS from a chosen root, with the same neighbor
    /// ordering heuristic as [`PseudoTree::build`].
    pub fn build_from(instance: &AdcopInstance, root: AgentId) -> Result<PseudoTree> {
        let n = instance.agent_count();
        if root >= n {
            return Err(Error::InvalidParameter(format!("no agent {root}")));
        }
        let neighbor_order = |agent: AgentId| -> Vec<AgentId> {
            let mut nb: Vec<AgentId> = instance.neighbors(agent).iter().map(|&(v, _)| v).collect();
            nb.sort_by_key(|&v| (std::cmp::Reverse(instance.degree(v)), v));
            nb
        };

        let mut parent = vec![None; n];
        let mut pseudo_parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut pseudo_children = vec![Vec::new(); n];
        let mut depth = vec![0usize; n];
        let mut preorder = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        let mut on_stack = vec![false; n];

        // Iterative DFS; each stack frame remembers how far it got through
        // its ordered neighbor list.
        let mut stack: Vec<(AgentId, Vec<AgentId>, usize)> = Vec::new();
        visited[root] = true;
        on_stack[root] = true;
        preorder.push(root);
        stack.push((root, neighbor_order(root), 0));
        while let Some((u, order, idx)) = stack.last_mut() {
            let u = *u;
            if *idx == order.len() {
                on_stack[u] = false;
                stack.pop();
                continue;
            }
            let v = order[*idx];
            *idx += 1;
            if !visited[v] {
                visited[v] = true;
                on_stack[v] = true;
                parent[v] = Some(u);
                children[u].push(v);
                depth[v] = depth[u] + 1;
                preorder.push(v);
                stack.push((v, neighbor_order(v), 0));
            } else if on_stack[v] && parent[u] != Some(v) {
                // Back edge from u to the ancestor v.
                pseudo_parents[u].push(v);
                pseudo_children[v].push(u);
            }
            // A visited neighbor that is off the stack lies in a finished
            // subtree of u; that edge was classified at its deeper endpoint.
        }

        if preorder.len() != n {
            return Err(Error::Disconnected);
        }

        for pp in &mut pseudo_parents {
            pp.sort_by_key(|&v| depth[v]);
        }

        let sep = separator_sets(
            n,
            &parent,
            &pseudo_parents,
            &children,
            &depth,
            &preorder,
        );

        Ok(PseudoTree {
            root,
            parent,
            pseudo_parents,
            children,
            pseudo_children,
            sep,
            depth,
            preorder,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> AgentId {
        self.root
    }

    pub fn parent(&self, agent: AgentId) -> Option<AgentId> {
        self.parent[agent]
    }

    pub fn pseudo_parents(&self, agent: AgentId) -> &[AgentId] {
        &self.pseudo_parents[agent]
    }

    /// Parent and pseudo parents, ordered shallowest first.
    pub fn all_parents(&self, agent: AgentId) -> Vec<AgentId> {
        let mut ap: Vec<AgentId> = self.pseudo_parents[agent].clone();
        if let Some(p) = self.parent[agent] {
            ap.push(p);
        }
        ap.sort_by_key(|&v| self.depth[v]);
        ap
    }

    pub fn children(&self, agent: AgentId) -> &[AgentId] {
        &self.children[agent]
    }

    pub fn pseudo_children(&self, agent: AgentId) -> &[AgentId] {
        &self.pseudo_children[agent]
    }

    pub fn separator(&self, agent: AgentId) -> &[AgentId] {
        &self.sep[agent]
    }

    pub fn depth(&self, agent: AgentId) -> usize {
        self.depth[agent]
    }

    pub fn is_leaf(&self, agent: AgentId) -> bool {
        self.children[agent].is_empty()
    }

    /// Depth-first visit order; parents always precede their children.
    pub fn preorder(&self) -> &[AgentId] {
        &self.preorder
    }

    /// Number of pseudo (back) edges.
    pub fn pseudo_edge_count(&self) -> usize {
        self.pseudo_parents.iter().map(Vec::len).sum()
    }

    /// The child of `agent` whose subtree contains `descendant`.
    pub fn child_toward(&self, agent: AgentId, descendant: AgentId) -> Option<AgentId> {
        let mut cur = descendant;
        while let Some(p) = self.parent[cur] {
            if p == agent {
                return Some(cur);
            }
            cur = p;
        }
        None
    }

    /// Proper descendants of `agent` in preorder.
    pub fn descendants(&self, agent: AgentId) -> Vec<AgentId> {
        let mut out = Vec::new();
        let mut stack: Vec<AgentId> = self.children[agent].to_vec();
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend_from_slice(&self.children[u]);
        }
        out.sort_by_key(|&u| self.preorder.iter().position(|&p| p == u));
        out
    }

    /// Dimension ordering induced by the tree: shallowest agents first,
    /// ties to the smaller id.
    pub fn dim_order(&self) -> DimOrder {
        DimOrder::from_depths(&self.depth)
    }

    /// GraphViz rendering; pseudo edges are dashed.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pseudo_tree {\n");
        for (agent, parent) in self.parent.iter().enumerate() {
            if let Some(p) = parent {
                let _ = writeln!(out, "  a{p} -> a{agent};");
            }
        }
        for (agent, pps) in self.pseudo_parents.iter().enumerate() {
            for pp in pps {
                let _ = writeln!(out, "  a{pp} -> a{agent} [style=dashed];");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Sep(leaf) = AP(leaf); Sep(a) = (AP(a) | union of children Seps) \ {a}.
fn separator_sets(
    n: usize,
    parent: &[Option<AgentId>],
    pseudo_parents: &[Vec<AgentId>],
    children: &[Vec<AgentId>],
    depth: &[usize],
    preorder: &[AgentId],
) -> Vec<Vec<AgentId>> {
    let mut sep: Vec<Vec<AgentId>> = vec![Vec::new(); n];
    for &agent in preorder.iter().rev() {
        let mut set: std::collections::BTreeSet<AgentId> = pseudo_parents[agent].iter().copied().collect();
        if let Some(p) = parent[agent] {
            set.insert(p);
        }
        for &c in &children[agent] {
            set.extend(sep[c].iter().copied());
        }
        set.remove(&agent);
        let mut ordered: Vec<AgentId> = set.into_iter().collect();
        ordered.sort_by_key(|&v| (depth[v], v));
        sep[agent] = ordered;
    }
    sep
}
