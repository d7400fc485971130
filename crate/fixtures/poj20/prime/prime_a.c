#include <stdio.h>

int main(void) {
  int n = 97;
  int is_prime = 1;
  for (int d = 2; d * d <= n; d++) {
    if (n % d == 0) {
      is_prime = 0;
      break;
    }
  }
  printf("%d\n", is_prime);
  return 0;
}
