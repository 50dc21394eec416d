#pragma once

#include <memory>
#include <string>

namespace cyclemorph {

// How many training requests may wait behind the running job before /train
// answers 409.
inline constexpr int kTrainQueueDepth = 8;

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 0;            // 0 picks a free port; read it back via Service::port()
  std::string static_dir;  // served at /; empty = built-in placeholder page
  std::string models_dir;  // persist finished models here; empty = memory only
};

// HTTP facade over the sketch-to-policy pipeline. Request handling is
// concurrent; training runs on a single worker thread that drains a FIFO
// queue, so at most one job is ever executing.
//
// Endpoints (response bodies all carry "v": 1):
//   POST /sketches              {points, camera?, plane?} -> projected target + sketch_id
//   POST /train                 {sketch_id, config?} -> {job_id}
//   GET  /jobs/<id>             state, sampled loss history tail
//   GET  /models/<id>/cycle?k=  learned cycle in sketch-plane coordinates
//   POST /models/<id>/rollout   {start, duration?, step?, method?} -> trajectory
//   GET  /models/<id>/field?region=x0,z0,x1,z1&res=N  planar velocity grid
//   GET  /                      static studio bundle when static_dir is set
//
// The rollout and field endpoints work in the model's own (normalized) frame,
// matching the CLI on the same model file; only /cycle maps back through the
// stored shape transform. Errors: 400 bad request, 404 unknown id, 409 queue
// full, 422 numerical failure; error bodies are {"v": 1, "error": message}.
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds, reloads any models already sitting in models_dir, and starts the
  // server and worker threads. Throws IoError when the port cannot be bound.
  void start();

  // Stops accepting requests, interrupts a running job at its next epoch,
  // and joins both threads. Idempotent.
  void stop();

  // The port actually bound; -1 before start().
  int port() const;

  // Test seam: a paused worker finishes its current job but leaves queued
  // jobs untouched, so tests can fill the queue deterministically.
  void set_worker_paused(bool paused);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cyclemorph
