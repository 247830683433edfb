from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from deanon import __version__
from deanon.deps import get_engine

from deanon.routes.runs_routes import router as runs_router
from deanon.routes.egonet_routes import router as egonet_router


app = FastAPI(title="Deanon Results API", version=__version__)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

@app.on_event("startup")
def startup():
    # creates ledger tables on first use
    get_engine()

app.include_router(runs_router)
app.include_router(egonet_router)


@app.get("/")
def root():
    return {"message": "Deanon results API running"}

@app.get("/health")
def health():
    return {"status": "ok"}
