from fastapi import APIRouter, File, HTTPException, UploadFile

from ..errors import DeanonError
from ..services.egonet_engine import Scheme, detect_ego, parse_release
from ..services.signature_engine import inner_signatures

router = APIRouter(prefix="/egonets", tags=["egonets"])


@router.post("/inspect")
async def inspect_egonet(file: UploadFile = File(...)):
    data = await file.read()

    try:
        egonet = parse_release(data.decode("ascii"))
        detected = detect_ego(egonet)
    except UnicodeDecodeError:
        raise HTTPException(400, "Egonet file must be ASCII text")
    except DeanonError as e:
        raise HTTPException(400, f"Failed to read egonet: {e}")

    signatures = None
    if egonet.scheme is Scheme.ONE:
        signatures = {str(p): list(sig) for p, sig in inner_signatures(egonet, 1).items()}

    return {
        "scheme": int(egonet.scheme),
        "declared_ego": egonet.ego_pseudonym,
        "detected_ego": "ambiguous" if detected is None else detected,
        "nodes": len(egonet.graph),
        "edges": egonet.graph.edge_count,
        "hops": {
            str(h): sum(1 for d in egonet.hop_of.values() if d == h)
            for h in (0, 1, 2)
        },
        "signatures": signatures,
    }
