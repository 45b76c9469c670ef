"""
Persistent segment tree over a small integer array.

Updates never modify nodes: every node on the root-to-leaf path is copied
and untouched subtrees are shared with the previous version. All versions
stay queryable through their roots, which makes the tree the ground truth
for historical range-minimum queries.
"""

from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

from .errors import InvalidInputError

VALUE_MIN = 1
VALUE_MAX = 15


@dataclass(frozen=True)
class TreeNode:
    """A single immutable segment tree node."""

    id: int
    range_lo: int
    range_hi: int
    value: int
    version: int
    entity: int
    left: Optional[int] = None
    right: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def mid(self) -> int:
        return (self.range_lo + self.range_hi) // 2


def _check_value(value: int) -> None:
    if not VALUE_MIN <= value <= VALUE_MAX:
        raise InvalidInputError(
            f"value {value} outside [{VALUE_MIN}, {VALUE_MAX}]"
        )


class VersionedTree:
    """Append-only node pool plus one root per version."""

    def __init__(self, size: int):
        self.size = size
        self.nodes: List[TreeNode] = []
        self.roots: List[int] = []

    @property
    def initial_node_count(self) -> int:
        return 2 * self.size - 1

    @property
    def latest_version(self) -> int:
        return len(self.roots) - 1

    @classmethod
    def build(cls, array: Sequence[int]) -> "VersionedTree":
        """Build version 0, allocating ids in post-order (root gets n-1)."""
        if len(array) == 0:
            raise InvalidInputError("cannot build a segment tree over an empty array")
        for value in array:
            _check_value(value)

        tree = cls(len(array))
        root = tree._build_range(list(array), 0, len(array) - 1)
        tree.roots.append(root)
        return tree

    def _build_range(self, array: List[int], lo: int, hi: int) -> int:
        if lo == hi:
            return self._append(lo, hi, array[lo], version=0, entity=None)
        mid = (lo + hi) // 2
        left = self._build_range(array, lo, mid)
        right = self._build_range(array, mid + 1, hi)
        value = min(self.nodes[left].value, self.nodes[right].value)
        return self._append(lo, hi, value, version=0, entity=None, left=left, right=right)

    def _append(
        self,
        lo: int,
        hi: int,
        value: int,
        version: int,
        entity: Optional[int],
        left: Optional[int] = None,
        right: Optional[int] = None,
    ) -> int:
        node_id = len(self.nodes)
        self.nodes.append(
            TreeNode(
                id=node_id,
                range_lo=lo,
                range_hi=hi,
                value=value,
                version=version,
                # build nodes are their own entity
                entity=node_id if entity is None else entity,
                left=left,
                right=right,
            )
        )
        return node_id

    # ------------------------------------------------------------------
    # Validation helpers
    # ------------------------------------------------------------------

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.size:
            raise InvalidInputError(f"index {index} outside [0, {self.size})")

    def _check_version(self, version: int) -> None:
        if not 0 <= version < len(self.roots):
            raise InvalidInputError(
                f"version {version} outside [0, {len(self.roots)})"
            )

    def _check_range(self, version: int, a: int, b: int) -> None:
        self._check_version(version)
        if a > b:
            raise InvalidInputError(f"empty range [{a}, {b}]")
        self._check_index(a)
        self._check_index(b)

    # ------------------------------------------------------------------
    # Operations
    # ------------------------------------------------------------------

    def update(self, index: int, value: int) -> int:
        """Point-update the latest version by path copying; returns the new version id."""
        self._check_index(index)
        _check_value(value)
        version = len(self.roots)
        new_root = self._copy_path(self.roots[-1], index, value, version)
        self.roots.append(new_root)
        return version

    def _copy_path(self, node_id: int, index: int, value: int, version: int) -> int:
        node = self.nodes[node_id]
        if node.is_leaf:
            return self._append(
                node.range_lo, node.range_hi, value, version, node.entity
            )

        left, right = node.left, node.right
        assert left is not None and right is not None
        if index <= node.mid:
            left = self._copy_path(left, index, value, version)
        else:
            right = self._copy_path(right, index, value, version)
        merged = min(self.nodes[left].value, self.nodes[right].value)
        return self._append(
            node.range_lo, node.range_hi, merged, version, node.entity, left, right
        )

    def query_min(self, version: int, a: int, b: int) -> int:
        """Minimum over A^(version)[a..b]."""
        return min(self.nodes[i].value for i in self.canonical_cover(version, a, b))

    def canonical_cover(self, version: int, a: int, b: int) -> List[int]:
        """Node ids whose ranges exactly partition [a, b], ordered left to right."""
        self._check_range(version, a, b)
        cover: List[int] = []
        self._collect_cover(self.roots[version], a, b, cover)
        return cover

    def _collect_cover(self, node_id: int, a: int, b: int, cover: List[int]) -> None:
        node = self.nodes[node_id]
        if b < node.range_lo or node.range_hi < a:
            return
        if a <= node.range_lo and node.range_hi <= b:
            cover.append(node_id)
            return
        assert node.left is not None and node.right is not None
        self._collect_cover(node.left, a, b, cover)
        self._collect_cover(node.right, a, b, cover)

    def update_path(self, index: int, version: Optional[int] = None) -> List[int]:
        """Root-to-leaf node ids for leaf ``index``, in the latest version by default."""
        self._check_index(index)
        if version is None:
            version = self.latest_version
        self._check_version(version)
        path = []
        node = self.nodes[self.roots[version]]
        while True:
            path.append(node.id)
            if node.is_leaf:
                return path
            child = node.left if index <= node.mid else node.right
            assert child is not None
            node = self.nodes[child]

    def snapshot_array(self, version: int) -> List[int]:
        """A^(version), read from the leaves reachable from its root."""
        self._check_version(version)
        return [
            self.nodes[node_id].value
            for node_id in self.reachable(version)
            if self.nodes[node_id].is_leaf
        ]

    # ------------------------------------------------------------------
    # Structure inspection
    # ------------------------------------------------------------------

    def reachable(self, version: int) -> List[int]:
        """Node ids reachable from the root of ``version`` in pre-order."""
        self._check_version(version)
        order: List[int] = []
        stack = [self.roots[version]]
        while stack:
            node = self.nodes[stack.pop()]
            order.append(node.id)
            if not node.is_leaf:
                assert node.left is not None and node.right is not None
                stack.append(node.right)
                stack.append(node.left)
        return order

    def edges(self, version: int) -> Iterator[Tuple[int, int]]:
        """(parent, child) node-id pairs of the version's tree."""
        for node_id in self.reachable(version):
            node = self.nodes[node_id]
            if not node.is_leaf:
                assert node.left is not None and node.right is not None
                yield node_id, node.left
                yield node_id, node.right

    def leaf_entity(self, index: int) -> int:
        """Entity (build node id) of the leaf holding array position ``index``."""
        self._check_index(index)
        node = self.nodes[self.roots[0]]
        while not node.is_leaf:
            child = node.left if index <= node.mid else node.right
            assert child is not None
            node = self.nodes[child]
        return node.entity

    def node_count_after(self, version: int) -> int:
        """Pool size once ``version`` had been created."""
        self._check_version(version)
        return self.roots[version] + 1
