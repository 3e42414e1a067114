#include <stdio.h>
#include <string.h>

#include "moffle.h"

#define CHECK(call)                                                   \
  do {                                                                \
    MoffleStatus s_ = (call);                                         \
    if (s_ != MOFFLE_STATUS_OK) {                                     \
      fprintf(stderr, "%s -> %d: %s\n", #call, s_, moffle_last_error()); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  MoffleConfig *cfg = NULL;
  CHECK(moffle_config_new(&cfg));
  CHECK(moffle_config_set(cfg, "env.horizon", "2"));
  CHECK(moffle_config_set(cfg, "moffle.n", "300"));
  CHECK(moffle_config_set(cfg, "moffle.restarts", "2"));

  if (moffle_config_set(cfg, "no.such.key", "1") != MOFFLE_STATUS_INVALID_CONFIG) return 2;
  if (strstr(moffle_last_error(), "no.such.key") == NULL) return 3;

  MoffleEnv *env = NULL;
  CHECK(moffle_env_generate(cfg, &env));
  size_t h = 0, k = 0, d = 0;
  double eta = 0.0;
  CHECK(moffle_env_shape(env, &h, &k, &d));
  CHECK(moffle_env_eta_min(env, &eta));
  if (h != 2 || k != 2 || d != 3 || !(eta > 0.0)) return 4;

  MoffleReport *report = NULL;
  CHECK(moffle_run(cfg, "e2e", NULL, &report));
  char *json = NULL;
  CHECK(moffle_report_to_json(report, &json));
  if (strstr(json, "\"downstream\"") == NULL) return 5;

  printf("moffle %s eta_min=%.4f\n", moffle_version(), eta);
  moffle_string_free(json);
  moffle_report_free(report);
  moffle_env_free(env);
  moffle_config_free(cfg);
  return 0;
}
