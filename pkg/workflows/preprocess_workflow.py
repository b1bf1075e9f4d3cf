"""
LangGraph Preprocessing Workflow

Orchestrates dataset preparation as a three-node graph:
1. split          - list cases and partition them by case id
2. extract        - per case: select, crop, normalise, compose, resize; write the slice cache
3. write_manifest - persist the split manifest with per-partition slice counts

State carries only JSON-friendly values; arrays live on disk in the cache.
"""

import operator
from concurrent.futures import ThreadPoolExecutor
from typing import Annotated, Any, Dict, TypedDict

from langgraph.checkpoint.memory import MemorySaver
from langgraph.graph import END, StateGraph

from config import settings
from models.config_models import DataSection
from models.data_models import SplitManifest
from pipeline.dataset import write_case_slices
from pipeline.preprocessing import preprocess_volume
from pipeline.splits import save_manifest, split_cases
from pipeline.volumes import list_cases, load_volume
from utils.errors import DataError
from utils.logger import setup_logger

logger = setup_logger(__name__)


class PreprocessState(TypedDict, total=False):
    """State flowing between the preprocessing nodes."""

    # Input
    data: Dict[str, Any]
    seed: int

    # split outputs
    split: Dict[str, Any]

    # extract outputs
    slice_counts: Dict[str, int]

    # write_manifest outputs
    manifest_path: str

    messages: Annotated[list, operator.add]


class PreprocessWorkflow:
    """Builds and runs the preprocessing graph."""

    def __init__(self, threads: int = 0):
        self.threads = threads or settings.threads
        self.graph = self._build_graph()

    def _build_graph(self):
        workflow = StateGraph(PreprocessState)

        workflow.add_node("split", self._split_node)
        workflow.add_node("extract", self._extract_node)
        workflow.add_node("write_manifest", self._manifest_node)

        workflow.set_entry_point("split")
        workflow.add_edge("split", "extract")
        workflow.add_edge("extract", "write_manifest")
        workflow.add_edge("write_manifest", END)

        return workflow.compile(checkpointer=MemorySaver())

    def _split_node(self, state: PreprocessState) -> Dict[str, Any]:
        """Partition the case ids found under the dataset root."""
        logger.info("Executing split node...")
        try:
            data = DataSection.model_validate(state["data"])
            case_ids = list_cases(data.root)
            if not case_ids:
                raise DataError(f"no cases found under {data.root}")
            manifest = split_cases(case_ids, data.split_fractions, state["seed"])
            return {"split": manifest.model_dump(mode="json"), "messages": [f"Split {len(case_ids)} cases"]}
        except Exception as e:
            logger.error(f"Split node failed: {e}")
            raise

    def _extract_case(self, data: DataSection, case_id: str) -> int:
        volume = load_volume(data.root, case_id)
        pairs = preprocess_volume(volume, data.tumor_threshold, data.fixed_crop, (data.image_size, data.image_size))
        return write_case_slices(data.cache_dir, case_id, pairs)

    def _extract_node(self, state: PreprocessState) -> Dict[str, Any]:
        """Preprocess every case into the slice cache; cases fan out over a thread pool."""
        logger.info(f"Executing extract node with {self.threads} thread(s)...")
        try:
            data = DataSection.model_validate(state["data"])
            manifest = SplitManifest.model_validate(state["split"])
            case_ids = sorted(manifest.train + manifest.val + manifest.test)
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                counts = list(pool.map(lambda case_id: self._extract_case(data, case_id), case_ids))
            slice_counts = dict(zip(case_ids, counts))
            return {"slice_counts": slice_counts, "messages": [f"Cached {sum(counts)} slices"]}
        except Exception as e:
            logger.error(f"Extract node failed: {e}")
            raise

    def _manifest_node(self, state: PreprocessState) -> Dict[str, Any]:
        """Write the split manifest with slice counts per partition."""
        logger.info("Executing write_manifest node...")
        try:
            data = DataSection.model_validate(state["data"])
            manifest = SplitManifest.model_validate(state["split"])
            counts = state["slice_counts"]
            manifest.slice_counts = {
                name: sum(counts[c] for c in manifest.partition(name)) for name in ("train", "val", "test")
            }
            path = save_manifest(manifest, data.manifest_path)
            return {
                "split": manifest.model_dump(mode="json"),
                "manifest_path": str(path),
                "messages": ["Manifest written"],
            }
        except Exception as e:
            logger.error(f"Write manifest node failed: {e}")
            raise

    def run(self, data: DataSection, seed: int) -> SplitManifest:
        """
        Run the preprocessing graph.

        Args:
            data: Data settings (root, cache, manifest path, selection and size)
            seed: Run seed for the split

        Returns:
            The written split manifest
        """
        logger.info(f"Starting preprocessing of {data.root}")
        initial_state: PreprocessState = {
            "data": data.model_dump(mode="json"),
            "seed": seed,
            "messages": ["Preprocessing started"],
        }
        config = {"configurable": {"thread_id": "preprocess"}}

        final_state: Dict[str, Any] = {}
        for update in self.graph.stream(initial_state, config):
            logger.debug(f"Completed node(s): {list(update.keys())}")
            for values in update.values():
                final_state.update(values or {})

        manifest = SplitManifest.model_validate(final_state["split"])
        logger.info(f"Preprocessing complete: {manifest.slice_counts}")
        return manifest


def preprocess_dataset(data: DataSection, seed: int, threads: int = 0) -> SplitManifest:
    return PreprocessWorkflow(threads).run(data, seed)
