from .cluster import Coordinator, LocalCluster, LocalNode, QueryExecution
from .membership import HeartbeatMonitor, Membership, NodeInfo, heartbeat_loop
from .node import RESULT_EXCHANGE, Placement, output_targets, place, receive_spec, run_fragment

__all__ = [
    "Coordinator", "HeartbeatMonitor", "LocalCluster", "LocalNode", "Membership", "NodeInfo", "Placement",
    "QueryExecution", "RESULT_EXCHANGE", "heartbeat_loop", "output_targets", "place", "receive_spec", "run_fragment",
]
