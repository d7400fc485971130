#include <stdio.h>

static int add_up(int n) {
  int s = 0;
  int k = 0;
  do {
    s = s + k;
    k++;
  } while (k <= n);
  return s;
}

int main(void) {
  printf("%d\n", add_up(100));
  return 0;
}
