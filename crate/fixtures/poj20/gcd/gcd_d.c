#include <stdio.h>

static int remainder_of(int a, int b) {
  return a % b;
}

int main(void) {
  int m = 252;
  int n = 105;
  for (;;) {
    if (n == 0) {
      break;
    }
    int r = remainder_of(m, n);
    m = n;
    n = r;
  }
  printf("%d\n", m);
  return 0;
}
